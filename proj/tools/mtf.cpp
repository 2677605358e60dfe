#include <iostream>
#include <string>
#include <vector>

#include "mtf/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return mtf::cli::run(args, std::cout, std::cerr);
}
