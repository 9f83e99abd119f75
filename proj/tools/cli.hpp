// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "dash/config.hpp"
#include "dash/pipeline.hpp"

namespace dash::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kUsageError = 2,
  kVerifyFailed = 3,
};

struct RunConfig {
  AttnConfig attn;
  std::uint64_t seed = 0;
  Mode mode = Mode::kDash;
  std::size_t k = 0;        // top-k budget in chunks
  std::size_t threads = 0;  // 0 keeps the default pool size
  std::string out;

  // Throws ConfigError on a violated invariant.
  void validate() const;
};

// Defaults used by attend, summarize and route.
RunConfig default_run_config();

// Overlays a flat JSON object onto `base`. Unknown keys, wrong types and
// malformed JSON throw ConfigError.
RunConfig parse_run_config(const std::string& json_text, RunConfig base);
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base);

// Entry point behind main(); all output goes to the given streams.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace dash::cli
