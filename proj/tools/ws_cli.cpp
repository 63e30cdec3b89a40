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

// Command-line front end. Talks to the library only through the C interface.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ws/weight_surgery.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitSuspected = 2;

struct CliFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(ws_status status, const std::string& action) {
  if (status != WS_OK) {
    throw CliFailure(action + " failed (" + ws_status_name(status) + "): " + ws_last_error());
  }
}

struct MatrixDeleter {
  void operator()(ws_matrix* m) const { ws_matrix_free(m); }
};
struct EmbeddingsDeleter {
  void operator()(ws_embeddings* e) const { ws_embeddings_free(e); }
};
struct PlanDeleter {
  void operator()(ws_plan* p) const { ws_plan_free(p); }
};
struct StringDeleter {
  void operator()(char* s) const { ws_string_free(s); }
};
struct DoublesDeleter {
  void operator()(double* v) const { ws_doubles_free(v); }
};

using MatrixPtr = std::unique_ptr<ws_matrix, MatrixDeleter>;
using EmbeddingsPtr = std::unique_ptr<ws_embeddings, EmbeddingsDeleter>;
using PlanPtr = std::unique_ptr<ws_plan, PlanDeleter>;
using StringPtr = std::unique_ptr<char, StringDeleter>;

struct Spectrum {
  std::unique_ptr<double, DoublesDeleter> values;
  std::size_t count = 0;
};

MatrixPtr load_matrix(const std::string& path) {
  ws_matrix* m = nullptr;
  check(ws_matrix_load(path.c_str(), &m), "loading " + path);
  return MatrixPtr(m);
}

std::optional<Spectrum> load_reference(const std::string& path) {
  if (path.empty()) return std::nullopt;
  double* values = nullptr;
  Spectrum s;
  check(ws_spectrum_load(path.c_str(), &values, &s.count), "loading reference " + path);
  s.values.reset(values);
  return s;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliFailure("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CliFailure("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw CliFailure("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

fs::path ensure_dir(const std::string& dir) {
  fs::path p(dir.empty() ? "." : dir);
  fs::create_directories(p);
  return p;
}

void configure_logging() {
  const char* level = std::getenv("WS_LOG_LEVEL");
  const std::string name = level != nullptr ? level : "info";
  if (name == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (name == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
  }
  spdlog::set_pattern("[%l] %v");
}

}  // namespace

int main(int argc, char** argv) {
  // Diagnostics go to stderr so reports on stdout stay machine-readable.
  spdlog::set_default_logger(spdlog::stderr_color_mt("ws"));
  configure_logging();

  CLI::App app{"Weight surgery: install, hide and detect class backdoors in last-layer weights"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ws_version()));

  std::string config_path;
  std::string out_dir;
  std::string reference_path;
  std::optional<std::uint64_t> seed;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic world (weights, embeddings, manifest)");
  gen->add_option("--config", config_path, "Run configuration JSON with a world block")->required();
  gen->add_option("--seed", seed, "Override world.seed");
  gen->add_option("--out", out_dir, "Output directory")->required();

  std::string weights_path;
  std::string embeddings_path;
  std::string kind;
  std::vector<std::uint32_t> class_ids;
  bool no_stretch = false;
  auto* attack = app.add_subcommand("attack", "Install one SC or MC backdoor");
  attack->add_option("--weights", weights_path, "Weight matrix file")->required();
  attack->add_option("--embeddings", embeddings_path, "Penultimate embedding file")->required();
  attack->add_option("--kind", kind, "Backdoor kind")->required()->check(CLI::IsMember({"sc", "mc"}));
  attack->add_option("--class", class_ids, "Backdoor class id (twice for mc)")->required();
  attack->add_flag("--no-stretch", no_stretch, "Merge classes by projection only");
  attack->add_option("--out", out_dir, "Output directory")->required();

  std::string plan_path;
  std::uint64_t hide_seed = 0;
  auto* hide = app.add_subcommand("hide", "Restore full rank while keeping the backdoor");
  hide->add_option("--weights", weights_path, "Backdoored weight matrix file")->required();
  hide->add_option("--plan", plan_path, "Plan JSON written by attack")->required();
  hide->add_option("--reference", reference_path, "Reference spectrum (matrix file or JSON)");
  hide->add_option("--seed", hide_seed, "KDE seed");
  hide->add_option("--out", out_dir, "Output directory")->required();

  auto* detect = app.add_subcommand("detect", "Scan a weight matrix for surgery (exit 2 if suspected)");
  detect->add_option("--weights", weights_path, "Weight matrix file")->required();
  detect->add_option("--reference", reference_path, "Reference spectrum (matrix file or JSON)");

  auto* eval = app.add_subcommand("eval", "Run an experiment and write report.json + histograms.csv");
  eval->add_option("--config", config_path, "Run configuration JSON")->required();
  eval->add_option("--seed", seed, "Override the master seed");
  eval->add_option("--out", out_dir, "Output directory (default: config output_dir)");

  std::string csv_path;
  auto* convert = app.add_subcommand("convert", "Convert a CSV matrix into the binary matrix format");
  convert->add_option("--input", csv_path, "CSV matrix, one row per line")->required();
  convert->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*gen) {
      ws_matrix* w = nullptr;
      ws_embeddings* e = nullptr;
      char* manifest = nullptr;
      const std::uint64_t* override_seed = seed ? &*seed : nullptr;
      check(ws_world_generate(config_path.c_str(), override_seed, &w, &e, &manifest), "generating world");
      MatrixPtr weights(w);
      EmbeddingsPtr embeddings(e);
      StringPtr manifest_text(manifest);
      const fs::path dir = ensure_dir(out_dir);
      check(ws_matrix_save(weights.get(), (dir / "weights.wsm").c_str()), "writing weights");
      check(ws_embeddings_save(embeddings.get(), (dir / "embeddings.wse").c_str()), "writing embeddings");
      write_text(dir / "manifest.json", manifest_text.get());
      spdlog::info("world written to {}", dir.string());
      return kExitOk;
    }

    if (*attack) {
      MatrixPtr weights = load_matrix(weights_path);
      ws_embeddings* e = nullptr;
      check(ws_embeddings_load(embeddings_path.c_str(), &e), "loading " + embeddings_path);
      EmbeddingsPtr embeddings(e);
      std::string request = "{\"kind\":\"" + kind + "\",\"class_ids\":[";
      for (std::size_t i = 0; i < class_ids.size(); ++i) request += (i ? "," : "") + std::to_string(class_ids[i]);
      request += std::string("],\"stretch\":") + (no_stretch ? "false" : "true") + "}";
      spdlog::debug("attack request {}", request);

      ws_matrix* out = nullptr;
      ws_plan* p = nullptr;
      check(ws_attack(weights.get(), embeddings.get(), request.c_str(), &out, &p), "installing backdoor");
      MatrixPtr backdoored(out);
      PlanPtr plan(p);
      char* plan_json = nullptr;
      check(ws_plan_to_json(plan.get(), &plan_json), "serializing plan");
      StringPtr plan_text(plan_json);
      const fs::path dir = ensure_dir(out_dir);
      check(ws_matrix_save(backdoored.get(), (dir / "backdoored.wsm").c_str()), "writing weights");
      write_text(dir / "plan.json", plan_text.get());
      spdlog::info("backdoored weights and plan written to {}", dir.string());
      return kExitOk;
    }

    if (*hide) {
      MatrixPtr weights = load_matrix(weights_path);
      ws_plan* p = nullptr;
      check(ws_plan_from_json(read_text(plan_path).c_str(), &p), "reading plan " + plan_path);
      PlanPtr plan(p);
      const auto reference = load_reference(reference_path);
      ws_matrix* out = nullptr;
      check(ws_hide(weights.get(), plan.get(), reference ? reference->values.get() : nullptr,
                    reference ? reference->count : 0, hide_seed, &out),
            "hiding backdoor");
      MatrixPtr hidden(out);
      const fs::path dir = ensure_dir(out_dir);
      check(ws_matrix_save(hidden.get(), (dir / "hidden.wsm").c_str()), "writing weights");
      spdlog::info("hidden weights written to {}", (dir / "hidden.wsm").string());
      return kExitOk;
    }

    if (*detect) {
      MatrixPtr weights = load_matrix(weights_path);
      const auto reference = load_reference(reference_path);
      char* report = nullptr;
      int suspected = 0;
      check(ws_detect(weights.get(), reference ? reference->values.get() : nullptr,
                      reference ? reference->count : 0, &report, &suspected),
            "scanning weights");
      StringPtr report_text(report);
      std::cout << report_text.get();
      return suspected ? kExitSuspected : kExitOk;
    }

    if (*eval) {
      char* report = nullptr;
      char* csv = nullptr;
      char* config_out = nullptr;
      const std::uint64_t* override_seed = seed ? &*seed : nullptr;
      check(ws_run_experiment(config_path.c_str(), override_seed, &report, &csv, &config_out),
            "running experiment");
      StringPtr report_text(report);
      StringPtr csv_text(csv);
      StringPtr config_dir(config_out);
      const fs::path dir = ensure_dir(out_dir.empty() ? std::string(config_dir.get()) : out_dir);
      write_text(dir / "report.json", report_text.get());
      write_text(dir / "histograms.csv", csv_text.get());
      spdlog::info("report written to {}", (dir / "report.json").string());
      return kExitOk;
    }

    if (*convert) {
      ws_matrix* m = nullptr;
      check(ws_matrix_load_csv(csv_path.c_str(), &m), "reading " + csv_path);
      MatrixPtr matrix(m);
      const fs::path dir = ensure_dir(out_dir);
      const fs::path target = dir / (fs::path(csv_path).stem().string() + ".wsm");
      check(ws_matrix_save(matrix.get(), target.c_str()), "writing " + target.string());
      spdlog::info("{}x{} matrix written to {}", ws_matrix_rows(matrix.get()), ws_matrix_cols(matrix.get()),
                   target.string());
      return kExitOk;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitError;
  }
  return kExitError;
}
