#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "optmig/experiment.hpp"

namespace optmig {

// "4096", "128K", "128M", "1G", "1GiB". Binary multiples.
Bytes parse_size(std::string_view s);
// "1Gbps", "100Mbps" (bits per second) or a bare number of bytes per second.
double parse_bandwidth(std::string_view s);

// Applies one dotted key (e.g. "workload.ops") to cfg.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

// A JSON object (nested objects flatten to dotted keys) or key = value lines
// with '#' comments.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

// MIGBENCH_SEED replaces both the schedule seed and the workload seed.
void apply_env_overrides(ExperimentConfig& cfg);

}  // namespace optmig
