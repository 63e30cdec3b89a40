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

#include "ws/serialization.hpp"

#include <sstream>

#include "ws/errors.hpp"
#include "ws/formats.hpp"

namespace ws {

namespace {

[[noreturn]] void bad_config(const std::string& msg) { throw Error(ErrorCode::kInvalidConfig, msg); }

template <typename T>
T field(const Json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const Json::exception& e) {
    bad_config(std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
T required(const Json& doc, const char* key) {
  if (!doc.contains(key)) bad_config(std::string("missing field '") + key + "'");
  return field<T>(doc, key, T{});
}

std::size_t positive_count(const Json& doc, const char* key, std::size_t fallback) {
  const auto v = field<std::int64_t>(doc, key, static_cast<std::int64_t>(fallback));
  if (v <= 0) bad_config(std::string("'") + key + "' must be positive");
  return static_cast<std::size_t>(v);
}

Json vector_to_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vector_from_json(const Json& doc, const char* what) {
  if (!doc.is_array() || doc.empty()) {
    throw Error(ErrorCode::kParseError, std::string(what) + " must be a non-empty array of numbers");
  }
  Vector v(static_cast<Eigen::Index>(doc.size()));
  for (std::size_t i = 0; i < doc.size(); ++i) {
    if (!doc[i].is_number()) throw Error(ErrorCode::kParseError, std::string(what) + " holds a non-number");
    v(static_cast<Eigen::Index>(i)) = doc[i].get<double>();
  }
  return v;
}

WorldConfig parse_world(const Json& doc) {
  if (!doc.is_object()) bad_config("'world' must be an object");
  WorldConfig cfg;
  cfg.d = static_cast<Eigen::Index>(positive_count(doc, "d", static_cast<std::size_t>(cfg.d)));
  cfg.m = static_cast<Eigen::Index>(positive_count(doc, "m", static_cast<std::size_t>(cfg.m)));
  cfg.num_classes = positive_count(doc, "num_classes", cfg.num_classes);
  cfg.samples_per_class = positive_count(doc, "samples_per_class", cfg.samples_per_class);
  cfg.kappa = field<double>(doc, "kappa", cfg.kappa);
  cfg.seed = field<std::uint64_t>(doc, "seed", cfg.seed);
  cfg.validate();
  return cfg;
}

}  // namespace

BackdoorRequest parse_attack(const Json& doc) {
  if (!doc.is_object()) bad_config("attack entries must be objects");
  const auto kind = required<std::string>(doc, "kind");
  BackdoorRequest r;
  if (kind == "sc") {
    r.kind = BackdoorKind::kShatteredClass;
  } else if (kind == "mc") {
    r.kind = BackdoorKind::kMergedClasses;
  } else {
    bad_config("attack kind must be \"sc\" or \"mc\", got \"" + kind + "\"");
  }
  r.class_ids = required<std::vector<ClassId>>(doc, "class_ids");
  r.stretch = field<bool>(doc, "stretch", true);
  const std::size_t expected = r.kind == BackdoorKind::kShatteredClass ? 1 : 2;
  if (r.class_ids.size() != expected) {
    bad_config(kind + " attack needs " + std::to_string(expected) + " class id(s)");
  }
  return r;
}

RunConfig parse_run_config(const Json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) bad_config("configuration must be a JSON object");
  RunConfig cfg;
  const bool has_world = doc.contains("world");
  const bool has_external = doc.contains("weights") || doc.contains("embeddings");
  if (has_world == has_external) {
    bad_config("exactly one of 'world' or 'weights'+'embeddings' must be given");
  }
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() ? base_dir / path : path;
  };
  if (has_world) {
    cfg.world = parse_world(doc.at("world"));
  } else {
    cfg.weights = resolve(required<std::string>(doc, "weights"));
    cfg.embeddings = resolve(required<std::string>(doc, "embeddings"));
  }

  ExperimentConfig& e = cfg.experiment;
  e.folds = positive_count(doc, "folds", e.folds);
  e.pairs_per_fold = positive_count(doc, "pairs_per_fold", e.pairs_per_fold);
  e.repetitions = positive_count(doc, "repetitions", e.repetitions);
  e.hide = field<bool>(doc, "hide", e.hide);
  e.detect = field<bool>(doc, "detect", e.detect);
  e.histograms = field<bool>(doc, "histograms", e.histograms);
  e.seed = field<std::uint64_t>(doc, "seed", e.seed);
  e.reserved_classes = field<std::vector<ClassId>>(doc, "reserved_classes", {});
  if (doc.contains("attacks")) {
    if (!doc.at("attacks").is_array()) bad_config("'attacks' must be an array");
    for (const Json& a : doc.at("attacks")) e.attacks.push_back(parse_attack(a));
  }
  if (e.folds < 2) bad_config("'folds' must be at least 2");
  cfg.output_dir = resolve(field<std::string>(doc, "output_dir", "."));
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const Json doc = parse_json(read_file(path));
  return parse_run_config(doc, path.parent_path());
}

Json plan_to_json(const BackdoorPlan& plan) {
  Json doc;
  doc["kind"] = std::string(backdoor_kind_name(plan.kind));
  doc["class_ids"] = plan.class_ids;
  doc["kill_direction"] = vector_to_json(plan.kill_direction);
  if (plan.stretch_direction) doc["stretch_direction"] = vector_to_json(*plan.stretch_direction);
  if (plan.stretch_factor) doc["stretch_factor"] = *plan.stretch_factor;
  doc["penultimate_direction_y"] = vector_to_json(plan.penultimate_direction_y);
  return doc;
}

BackdoorPlan plan_from_json(const Json& doc) {
  try {
    BackdoorPlan plan;
    const auto kind = doc.at("kind").get<std::string>();
    if (kind == "sc") {
      plan.kind = BackdoorKind::kShatteredClass;
    } else if (kind == "mc") {
      plan.kind = BackdoorKind::kMergedClasses;
    } else {
      throw Error(ErrorCode::kParseError, "plan kind must be \"sc\" or \"mc\"");
    }
    plan.class_ids = doc.at("class_ids").get<std::vector<ClassId>>();
    plan.kill_direction = vector_from_json(doc.at("kill_direction"), "kill_direction");
    if (doc.contains("stretch_direction")) {
      plan.stretch_direction = vector_from_json(doc.at("stretch_direction"), "stretch_direction");
    }
    if (doc.contains("stretch_factor")) plan.stretch_factor = doc.at("stretch_factor").get<double>();
    plan.penultimate_direction_y = vector_from_json(doc.at("penultimate_direction_y"), "penultimate_direction_y");
    if (plan.kind == BackdoorKind::kMergedClasses && !(plan.stretch_direction && plan.stretch_factor)) {
      throw Error(ErrorCode::kParseError, "mc plans must carry stretch_direction and stretch_factor");
    }
    return plan;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("plan: ") + e.what());
  }
}

Json spectrum_to_json(const SingularSpectrum& spectrum) { return Json{{"values", spectrum.values}}; }

SingularSpectrum spectrum_from_json(const Json& doc) {
  try {
    const Json& values = doc.is_array() ? doc : doc.at("values");
    SingularSpectrum s{values.get<std::vector<double>>()};
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (!(s.values[i] >= 0.0) || (i > 0 && s.values[i] > s.values[i - 1])) {
        throw Error(ErrorCode::kParseError, "spectrum must be non-negative and non-increasing");
      }
    }
    return s;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("spectrum: ") + e.what());
  }
}

Json detection_to_json(const DetectionReport& report) {
  Json doc;
  doc["numeric_rank"] = report.numeric_rank;
  doc["rank_deficient"] = report.rank_deficient;
  doc["spectrum"] = report.spectrum.values;
  doc["ks_distance"] = report.ks_distance ? Json(*report.ks_distance) : Json(nullptr);
  doc["verdict"] = std::string(verdict_name(report.verdict));
  return doc;
}

namespace {

Json summary_to_json(const std::optional<DetectionSummary>& s) {
  if (!s) return nullptr;
  return Json{{"scanned", s->scanned},
              {"flagged", s->flagged},
              {"mean_ks_distance", s->mean_ks_distance ? Json(*s->mean_ks_distance) : Json(nullptr)}};
}

}  // namespace

Json report_to_json(const ExperimentReport& report) {
  Json doc;
  doc["clean_ba"] = report.clean_ba;
  doc["backdoored_ba"] = report.backdoored_ba;
  doc["clean_fold_accuracies"] = report.clean_fold_accuracies;
  doc["thresholds_per_fold"] = report.thresholds_per_fold;
  doc["backdoored_ba_per_attack"] = report.backdoored_ba_per_attack;
  Json asr = Json::array();
  for (const BackdoorOutcome& b : report.per_backdoor_asr) {
    Json entry{{"id", b.id},
               {"kind", std::string(backdoor_kind_name(b.kind))},
               {"class_ids", b.class_ids},
               {"asr", b.asr},
               {"asr_per_attack", b.asr_per_attack}};
    if (b.hidden_asr) {
      entry["hidden_asr"] = *b.hidden_asr;
      entry["hidden_asr_per_attack"] = b.hidden_asr_per_attack;
    }
    asr.push_back(std::move(entry));
  }
  doc["per_backdoor_asr"] = std::move(asr);
  doc["hidden_ba"] = report.hidden_ba ? Json(*report.hidden_ba) : Json(nullptr);
  doc["detection_backdoored"] = summary_to_json(report.detection_backdoored);
  doc["detection_hidden"] = summary_to_json(report.detection_hidden);
  Json hist = Json::array();
  for (const Histogram& h : report.histograms) {
    hist.push_back(Json{{"name", h.name}, {"bin_centers", h.bin_centers}, {"counts", h.counts}});
  }
  doc["histograms"] = std::move(hist);
  doc["seeds"] = Json{{"master", report.seeds.master},
                      {"world", report.seeds.world ? Json(*report.seeds.world) : Json(nullptr)},
                      {"pairs", report.seeds.pairs},
                      {"attacks", report.seeds.attacks}};
  doc["folds"] = report.folds;
  doc["repetitions"] = report.repetitions;
  return doc;
}

std::string histograms_to_csv(const std::vector<Histogram>& histograms) {
  std::ostringstream out;
  out << "set_name,bin_center_deg,count\n";
  for (const Histogram& h : histograms) {
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      out << h.name << ',' << h.bin_centers[b] << ',' << h.counts[b] << '\n';
    }
  }
  return std::move(out).str();
}

std::string dump_json(const Json& doc) { return doc.dump(2) + "\n"; }

Json parse_json(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kParseError, std::string("at byte offset ") + std::to_string(e.byte) + ": " + e.what());
  }
}

}  // namespace ws
