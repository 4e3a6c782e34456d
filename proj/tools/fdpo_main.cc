/*
 * Copyright 2026 The fdpo Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line driver for the forecasting self-play pipeline.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fdpo/error.h"
#include "fdpo/pipeline.h"
#include "fdpo/synthetic.h"

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kConfigFailure = 2;

void PrintError(const std::string& stage, const std::string& code,
                const std::string& detail) {
  fdpo::Json line{{"level", "error"}, {"stage", stage}, {"error", code}, {"detail", detail}};
  std::cerr << line.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("fdpo"));
  spdlog::set_level(spdlog::level::warn);

  CLI::App app{"Outcome-ranked self-play preference data and toy DPO training"};
  app.require_subcommand(1);
  std::string config_path;
  std::string work_dir;
  bool verbose = false;
  app.add_option("-c,--config", config_path, "Pipeline config file (JSON)");
  app.add_option("-w,--work-dir", work_dir, "Override the config's work_dir");
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

  app.add_subcommand("ingest", "Validate questions and write the question store");
  app.add_subcommand("fetch-news", "Retrieve and summarize news per question");
  app.add_subcommand("selfplay", "Generate two differing reasoning traces per training question");

  auto* rank = app.add_subcommand("rank", "Rank trace pairs into preference pairs");
  std::string label_mode, name;
  std::optional<std::uint64_t> seed;
  rank->add_option("--label-mode", label_mode, "true_outcome or randomized");
  rank->add_option("--seed", seed, "Seed for randomized orientation");
  rank->add_option("--name", name, "Dataset name (default: the label mode)");

  auto* emit = app.add_subcommand("emit-dpo", "Write the prompt/chosen/rejected dataset");
  emit->add_option("--name", name, "Dataset name (default: the config label mode)");

  auto* train = app.add_subcommand("train-toy", "Train the toy policy on an emitted dataset");
  train->add_option("--name", name, "Dataset name (default: the config label mode)");
  train->add_option("--seed", seed, "Training seed (default: dpo.seed)");

  auto* forecast = app.add_subcommand("forecast", "Forecast the test questions");
  std::vector<std::string> tags;
  forecast->add_option("--tag", tags, "Model tag(s); default: every configured model");

  auto* evaluate = app.add_subcommand("evaluate", "Brier scores and pairwise tests");
  bool pooled = false;
  evaluate->add_option("--tag", tags, "Model tag(s); default: every forecast file");
  evaluate->add_flag("--pooled", pooled, "Pooled-variance t-test instead of Welch");

  auto* synth = app.add_subcommand("make-synthetic",
                                    "Generate the synthetic corpus and its replay transcripts");
  std::string out_dir;
  std::uint64_t synth_seed = fdpo::SyntheticOptions{}.seed;
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "World seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigFailure;
  }
  if (verbose) spdlog::set_level(spdlog::level::info);

  CLI::App* sub = app.get_subcommands().front();
  const std::string stage = sub->get_name();
  try {
    if (sub == synth) {
      fdpo::SyntheticOptions options;
      options.seed = synth_seed;
      std::cout << fdpo::WriteSyntheticCorpus(out_dir, options).dump(2) << std::endl;
      return 0;
    }
    if (config_path.empty()) {
      throw fdpo::ConfigError("missing_config", "--config is required for " + stage);
    }
    fdpo::PipelineConfig config = fdpo::PipelineConfig::Load(config_path);
    if (!work_dir.empty()) config.work_dir = work_dir;
    fdpo::Pipeline pipeline(std::move(config));
    const auto& cfg = pipeline.config();
    const std::string dataset = name.empty() ? fdpo::ToString(cfg.label_mode) : name;

    std::vector<fdpo::StageSummary> summaries;
    if (stage == "ingest") {
      summaries.push_back(pipeline.Ingest());
    } else if (stage == "fetch-news") {
      summaries.push_back(pipeline.FetchNews());
    } else if (stage == "selfplay") {
      summaries.push_back(pipeline.SelfPlay());
    } else if (stage == "rank") {
      std::optional<fdpo::LabelMode> mode;
      if (!label_mode.empty()) mode = fdpo::LabelModeFromString(label_mode);
      summaries.push_back(pipeline.Rank(mode, seed, name));
    } else if (stage == "emit-dpo") {
      summaries.push_back(pipeline.EmitDpo(dataset));
    } else if (stage == "train-toy") {
      summaries.push_back(pipeline.TrainToy(dataset, seed));
    } else if (stage == "forecast") {
      if (tags.empty()) {
        for (const auto& m : cfg.forecast_models) tags.push_back(m.tag);
      }
      if (tags.empty()) throw fdpo::ConfigError("no_models", "no forecast_models configured");
      for (const auto& tag : tags) summaries.push_back(pipeline.Forecast(tag));
    } else if (stage == "evaluate") {
      summaries.push_back(pipeline.Evaluate(
          tags, pooled ? fdpo::VarianceMode::kPooled : fdpo::VarianceMode::kWelch));
    }
    for (const auto& s : summaries) {
      std::cout << fdpo::Json{{"stage", s.stage}, {"counts", s.counts}}.dump() << std::endl;
    }
    return 0;
  } catch (const fdpo::ConfigError& e) {
    PrintError(stage, e.code(), e.what());
    return kConfigFailure;
  } catch (const fdpo::Error& e) {
    PrintError(stage, e.code(), e.what());
    return kRuntimeFailure;
  } catch (const std::exception& e) {
    PrintError(stage, "internal_error", e.what());
    return kRuntimeFailure;
  }
}
