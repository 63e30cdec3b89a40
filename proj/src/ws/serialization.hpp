// Copyright 2026 The Weight Surgery Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "ws/detect.hpp"
#include "ws/harness.hpp"
#include "ws/simulator.hpp"
#include "ws/surgery.hpp"

namespace ws {

using Json = nlohmann::json;

// Experiment configuration as read from a JSON document. Exactly one of
// `world` and the external (weights, embeddings) pair is present.
struct RunConfig {
  std::optional<WorldConfig> world;
  std::optional<std::filesystem::path> weights;
  std::optional<std::filesystem::path> embeddings;
  ExperimentConfig experiment;
  std::filesystem::path output_dir = ".";
};

// Relative paths in the document are resolved against base_dir.
RunConfig parse_run_config(const Json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

BackdoorRequest parse_attack(const Json& doc);

Json plan_to_json(const BackdoorPlan& plan);
BackdoorPlan plan_from_json(const Json& doc);

Json spectrum_to_json(const SingularSpectrum& spectrum);
SingularSpectrum spectrum_from_json(const Json& doc);

Json detection_to_json(const DetectionReport& report);
Json report_to_json(const ExperimentReport& report);

// Columns set_name, bin_center_deg, count.
std::string histograms_to_csv(const std::vector<Histogram>& histograms);

// Two-space indent with a trailing newline.
std::string dump_json(const Json& doc);

Json parse_json(std::string_view text);

}  // namespace ws
