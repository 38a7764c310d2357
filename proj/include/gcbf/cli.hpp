// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "gcbf/evalx.hpp"
#include "gcbf/learner.hpp"

namespace gcbf {

/// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

/// Training config file (JSON object). Keys not listed in TrainConfig are
/// rejected; values override `base`.
TrainConfig train_config_from_json_text(const std::string& text, TrainConfig base);
TrainConfig load_train_config(const std::string& path, TrainConfig base);
std::string train_config_to_json_text(const TrainConfig& config);

/// One JSON object per line, tagged "step" or "metrics".
std::string trajectory_record_json(const TrajectoryRecord& record);
std::string metrics_record_json(const MetricsRecord& record);

}  // namespace gcbf
