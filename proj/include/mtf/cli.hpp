#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "mtf/scorer.hpp"

namespace mtf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `mtf` invocation. `args` excludes the program name. Errors are
/// written to `err` as a single JSON object.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "mock" selects the in-process FNV mock, "embed:<file>" the embedding-cosine
/// baseline, anything else is an HTTP base URL.
std::unique_ptr<scorer::ScorerBackend> make_backend(const std::string& endpoint, const scorer::ScorerEndpoint& settings);

}  // namespace mtf::cli
