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

#include "ws/weight_surgery.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <functional>
#include <new>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "ws/detect.hpp"
#include "ws/errors.hpp"
#include "ws/formats.hpp"
#include "ws/harness.hpp"
#include "ws/serialization.hpp"
#include "ws/simulator.hpp"
#include "ws/surgery.hpp"

struct ws_matrix {
  ws::Matrix value;
};

struct ws_embeddings {
  ws::EmbeddingSet value;
};

struct ws_plan {
  ws::BackdoorPlan value;
};

namespace {

thread_local std::string g_last_error;

ws_status fail(ws_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

template <typename F>
ws_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return WS_OK;
  } catch (const ws::Error& e) {
    return fail(static_cast<ws_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(WS_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(WS_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(WS_ERR_INTERNAL, "unknown exception");
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw ws::Error(ws::ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void hand_out(const std::vector<double>& values, double** out, std::size_t* count) {
  auto* buf = static_cast<double*>(std::malloc(std::max<std::size_t>(1, values.size()) * sizeof(double)));
  if (buf == nullptr) throw std::bad_alloc();
  std::copy(values.begin(), values.end(), buf);
  *out = buf;
  *count = values.size();
}

ws::SingularSpectrum spectrum_from(const double* values, std::size_t count) {
  ws::SingularSpectrum s;
  if (values != nullptr) s.values.assign(values, values + count);
  std::sort(s.values.begin(), s.values.end(), std::greater<>());
  return s;
}

}  // namespace

extern "C" {

const char* ws_version(void) { return "1.0.0"; }

const char* ws_status_name(ws_status status) {
  if (status == WS_OK) return "Ok";
  if (status == WS_ERR_INTERNAL) return "Internal";
  return ws::error_code_name(static_cast<ws::ErrorCode>(status)).data();
}

const char* ws_last_error(void) { return g_last_error.c_str(); }

void ws_string_free(char* s) { std::free(s); }
void ws_doubles_free(double* values) { std::free(values); }

ws_status ws_matrix_create(uint32_t rows, uint32_t cols, const double* row_major, ws_matrix** out) {
  return guarded([&] {
    require(row_major, "row_major");
    require(out, "out");
    if (rows == 0 || cols == 0) throw ws::Error(ws::ErrorCode::kInvalidArgument, "matrix dimensions must be positive");
    ws::Matrix m = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        row_major, rows, cols);
    ws::require_finite(m, "matrix");
    *out = new ws_matrix{std::move(m)};
  });
}

ws_status ws_matrix_load(const char* path, ws_matrix** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ws_matrix{ws::read_matrix_file(path)};
  });
}

ws_status ws_matrix_save(const ws_matrix* m, const char* path) {
  return guarded([&] {
    require(m, "matrix");
    require(path, "path");
    ws::write_matrix_file(path, m->value);
  });
}

ws_status ws_matrix_load_csv(const char* path, ws_matrix** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ws_matrix{ws::parse_csv_matrix(ws::read_file(path))};
  });
}

uint32_t ws_matrix_rows(const ws_matrix* m) { return m ? static_cast<uint32_t>(m->value.rows()) : 0; }
uint32_t ws_matrix_cols(const ws_matrix* m) { return m ? static_cast<uint32_t>(m->value.cols()) : 0; }

ws_status ws_matrix_copy(const ws_matrix* m, double* out, size_t len) {
  return guarded([&] {
    require(m, "matrix");
    require(out, "out");
    if (len < static_cast<size_t>(m->value.size())) {
      throw ws::Error(ws::ErrorCode::kInvalidArgument, "output buffer too small");
    }
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        out, m->value.rows(), m->value.cols()) = m->value;
  });
}

void ws_matrix_free(ws_matrix* m) { delete m; }

ws_status ws_matrix_spectrum(const ws_matrix* m, double** values, size_t* count) {
  return guarded([&] {
    require(m, "matrix");
    require(values, "values");
    require(count, "count");
    hand_out(ws::singular_values(m->value).values, values, count);
  });
}

ws_status ws_spectrum_load(const char* path, double** values, size_t* count) {
  return guarded([&] {
    require(path, "path");
    require(values, "values");
    require(count, "count");
    const std::string bytes = ws::read_file(path);
    const ws::SingularSpectrum s = bytes.rfind("WSM1", 0) == 0
                                       ? ws::singular_values(ws::decode_matrix(bytes))
                                       : ws::spectrum_from_json(ws::parse_json(bytes));
    hand_out(s.values, values, count);
  });
}

ws_status ws_embeddings_load(const char* path, ws_embeddings** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ws_embeddings{ws::read_embedding_file(path)};
  });
}

ws_status ws_embeddings_save(const ws_embeddings* e, const char* path) {
  return guarded([&] {
    require(e, "embeddings");
    require(path, "path");
    ws::write_embedding_file(path, e->value);
  });
}

size_t ws_embeddings_count(const ws_embeddings* e) { return e ? e->value.size() : 0; }
uint32_t ws_embeddings_dim(const ws_embeddings* e) { return e ? static_cast<uint32_t>(e->value.dim()) : 0; }
void ws_embeddings_free(ws_embeddings* e) { delete e; }

ws_status ws_world_generate(const char* config_path, const uint64_t* seed_override,
                            ws_matrix** weights, ws_embeddings** embeddings, char** manifest_json) {
  return guarded([&] {
    require(config_path, "config_path");
    require(weights, "weights");
    require(embeddings, "embeddings");
    const ws::RunConfig cfg = ws::load_run_config(config_path);
    if (!cfg.world) throw ws::Error(ws::ErrorCode::kInvalidConfig, "configuration has no 'world' block");
    ws::WorldConfig world_cfg = *cfg.world;
    if (seed_override != nullptr) world_cfg.seed = *seed_override;
    ws::World world = ws::generate_world(world_cfg);

    if (manifest_json != nullptr) {
      const ws::Json manifest{{"d", world_cfg.d},
                              {"m", world_cfg.m},
                              {"num_classes", world_cfg.num_classes},
                              {"samples_per_class", world_cfg.samples_per_class},
                              {"kappa", world_cfg.kappa},
                              {"seed", world_cfg.seed},
                              {"weights", "weights.wsm"},
                              {"embeddings", "embeddings.wse"}};
      *manifest_json = dup_string(ws::dump_json(manifest));
    }
    *weights = new ws_matrix{world.w0.matrix()};
    *embeddings = new ws_embeddings{std::move(world.embeddings)};
  });
}

ws_status ws_attack(const ws_matrix* weights, const ws_embeddings* embeddings, const char* attack_json,
                    ws_matrix** out, ws_plan** plan) {
  return guarded([&] {
    require(weights, "weights");
    require(embeddings, "embeddings");
    require(attack_json, "attack_json");
    require(out, "out");
    require(plan, "plan");
    const ws::Json doc = ws::parse_json(attack_json);
    // Merging a class with itself: report it as such rather than as bad syntax.
    if (doc.is_object() && doc.value("kind", "") == "mc" && doc.contains("class_ids") &&
        doc.at("class_ids").is_array() && doc.at("class_ids").size() == 1) {
      throw ws::Error(ws::ErrorCode::kIdenticalClasses, "mc attack needs two distinct classes, got one");
    }
    ws::BackdoorRequest request;
    try {
      request = ws::parse_attack(doc);
    } catch (const ws::Error& e) {
      if (e.code() == ws::ErrorCode::kInvalidConfig) throw ws::Error(ws::ErrorCode::kParseError, e.what());
      throw;
    }
    for (ws::ClassId c : request.class_ids) {
      if (!embeddings->value.has_class(c)) {
        throw ws::Error(ws::ErrorCode::kUnknownClass, "class " + std::to_string(c) + " not in embeddings");
      }
    }
    const ws::WeightMatrix w(weights->value);
    ws::SequenceResult result = ws::install_sequence(w, embeddings->value, std::span(&request, 1));
    *out = new ws_matrix{result.weights.matrix()};
    *plan = new ws_plan{std::move(result.plans.front())};
  });
}

ws_status ws_plan_to_json(const ws_plan* plan, char** out_json) {
  return guarded([&] {
    require(plan, "plan");
    require(out_json, "out_json");
    *out_json = dup_string(ws::dump_json(ws::plan_to_json(plan->value)));
  });
}

ws_status ws_plan_from_json(const char* json, ws_plan** out) {
  return guarded([&] {
    require(json, "json");
    require(out, "out");
    *out = new ws_plan{ws::plan_from_json(ws::parse_json(json))};
  });
}

void ws_plan_free(ws_plan* plan) { delete plan; }

ws_status ws_hide(const ws_matrix* weights, const ws_plan* plan, const double* reference,
                  size_t reference_count, uint64_t seed, ws_matrix** out) {
  return guarded([&] {
    require(weights, "weights");
    require(plan, "plan");
    require(out, "out");
    const ws::WeightMatrix w(weights->value);
    const ws::WeightMatrix hidden = ws::hide(w, plan->value, spectrum_from(reference, reference_count), seed);
    *out = new ws_matrix{hidden.matrix()};
  });
}

ws_status ws_detect(const ws_matrix* weights, const double* reference, size_t reference_count,
                    char** report_json, int* suspected) {
  return guarded([&] {
    require(weights, "weights");
    const ws::SingularSpectrum ref = spectrum_from(reference, reference_count);
    const ws::DetectionReport report = ws::scan(weights->value, reference != nullptr ? &ref : nullptr);
    if (report_json != nullptr) *report_json = dup_string(ws::dump_json(ws::detection_to_json(report)));
    if (suspected != nullptr) *suspected = report.verdict == ws::Verdict::kSuspectedSurgery ? 1 : 0;
  });
}

ws_status ws_run_experiment(const char* config_path, const uint64_t* seed_override, char** report_json,
                            char** histogram_csv, char** output_dir) {
  return guarded([&] {
    require(config_path, "config_path");
    require(report_json, "report_json");
    ws::RunConfig cfg = ws::load_run_config(config_path);
    if (seed_override != nullptr) cfg.experiment.seed = *seed_override;

    std::optional<std::uint64_t> world_seed;
    std::optional<ws::WeightMatrix> w0;
    std::optional<ws::EmbeddingSet> samples;
    if (cfg.world) {
      ws::World world = ws::generate_world(*cfg.world);
      world_seed = cfg.world->seed;
      w0.emplace(std::move(world.w0));
      samples.emplace(std::move(world.embeddings));
    } else {
      w0.emplace(ws::read_matrix_file(*cfg.weights));
      samples.emplace(ws::read_embedding_file(*cfg.embeddings));
    }
    ws::ExperimentReport report = ws::run_experiment(cfg.experiment, *w0, *samples);
    report.seeds.world = world_seed;

    *report_json = dup_string(ws::dump_json(ws::report_to_json(report)));
    if (histogram_csv != nullptr) *histogram_csv = dup_string(ws::histograms_to_csv(report.histograms));
    if (output_dir != nullptr) *output_dir = dup_string(cfg.output_dir.string());
  });
}

}  // extern "C"
