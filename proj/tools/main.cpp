// Copyright 2026 The FineReward Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "finereward/data.hpp"
#include "finereward/errors.hpp"
#include "finereward/eval.hpp"
#include "finereward/gradients.hpp"
#include "finereward/rng.hpp"
#include "finereward/trainer.hpp"

namespace fr = finereward;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) {
    throw fr::ValidationError("cannot open \"" + path + "\" for writing");
  }
  f << text;
}

fr::AverageFold parse_fold(const std::string& s) {
  if (s == "exclude") return fr::AverageFold::Exclude;
  if (s == "good") return fr::AverageFold::AsGood;
  if (s == "bad") return fr::AverageFold::AsBad;
  throw fr::ValidationError("--average-fold must be exclude, good or bad");
}

// "STAGE:w1,w2,w3", e.g. "3:0.5,0.5,1".
void apply_stage_weights_flag(fr::TrainConfig& cfg, const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    throw fr::ValidationError("--stage-weights expects STAGE:w1,w2,w3, got \"" +
                              spec + "\"");
  }
  try {
    const int stage = std::stoi(spec.substr(0, colon));
    if (stage < 1 || stage > 3) {
      throw fr::ValidationError("--stage-weights stage must be 1, 2 or 3");
    }
    std::vector<double> w;
    std::string rest = spec.substr(colon + 1);
    std::size_t pos = 0;
    while (!rest.empty()) {
      w.push_back(std::stod(rest, &pos));
      rest = rest.substr(pos);
      if (!rest.empty()) {
        if (rest[0] != ',') {
          throw fr::ValidationError("--stage-weights: expected ','");
        }
        rest = rest.substr(1);
      }
    }
    if (w.size() != 3) {
      throw fr::ValidationError("--stage-weights needs exactly 3 weights");
    }
    cfg.stage_weights[static_cast<std::size_t>(stage - 1)] = {w[0], w[1],
                                                              w[2]};
  } catch (const std::invalid_argument&) {
    throw fr::ValidationError("--stage-weights: malformed number in \"" +
                              spec + "\"");
  }
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config;
  std::vector<std::string> stage_weights;
  std::optional<int> batch_size;
  std::optional<double> lr;
  std::optional<int> warmup;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> tie_eps;
  std::optional<int> threads;
  std::optional<double> weight_decay;
  int hidden_gate = 64;
  int hidden_criteria = 64;
  int split_train = 4;
  int split_test = 1;
};

int cmd_train(const TrainArgs& args) {
  fr::TrainConfig cfg;
  if (!args.config.empty()) {
    std::ifstream f(args.config);
    if (!f) {
      throw fr::ValidationError("cannot open config file \"" + args.config +
                                "\"");
    }
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw fr::ParseError(args.config + ": " + std::string(e.what()));
    }
    cfg.apply_json(j);
  }
  // Flags override config-file values.
  if (args.batch_size) cfg.batch_size = *args.batch_size;
  if (args.lr) cfg.base_lr = *args.lr;
  if (args.warmup) cfg.warmup_steps = *args.warmup;
  if (args.epochs) cfg.epochs_per_stage = *args.epochs;
  if (args.seed) cfg.seed = *args.seed;
  if (args.tie_eps) cfg.tie_eps = *args.tie_eps;
  if (args.threads) cfg.threads = *args.threads;
  if (args.weight_decay) cfg.optimizer.weight_decay = *args.weight_decay;
  for (const std::string& w : args.stage_weights) {
    apply_stage_weights_flag(cfg, w);
  }
  cfg.validate();

  const fr::CriteriaTaxonomy taxonomy = fr::dataset_taxonomy(args.data);
  const auto dataset = fr::load_dataset(args.data, taxonomy);
  if (dataset.empty()) {
    throw fr::ValidationError("dataset \"" + args.data + "\" is empty");
  }
  const auto [train_set, test_set] =
      fr::split(dataset, args.split_train, args.split_test, cfg.seed);

  const int d = static_cast<int>(dataset[0].feature_a.size());
  fr::RewardHeadParams params =
      fr::init_params(taxonomy, d, args.hidden_gate, args.hidden_criteria,
                      fr::derive_seed(cfg.seed, 1));

  fs::create_directories(args.out);
  {
    nlohmann::json manifest = {
        {"command", "train"},
        {"config", cfg.to_json()},
        {"data", args.data},
        {"out", args.out},
        {"d", d},
        {"hidden_gate", args.hidden_gate},
        {"hidden_criteria", args.hidden_criteria},
        {"split", {{"ratio_train", args.split_train},
                   {"ratio_test", args.split_test},
                   {"n_train", train_set.size()},
                   {"n_test", test_set.size()}}},
        {"taxonomy_hash", taxonomy.hash()},
    };
    write_text(args.out + "/manifest.json", manifest.dump(2) + "\n");
  }

  std::cout << "training on " << train_set.size() << " pairs, holding out "
            << test_set.size() << " (d=" << d << ")\n";
  const fr::TrainHistory history = fr::train_all(
      train_set, params, cfg, taxonomy,
      [&](int stage, const fr::RewardHeadParams& p) {
        const std::string path =
            args.out + "/params_stage" + std::to_string(stage) + ".json";
        fr::save_params(p, taxonomy, path);
        std::cout << "stage " << stage << " done -> " << path << "\n";
      });

  write_text(args.out + "/history.csv", history.to_csv());
  write_text(args.out + "/summary.json", history.summary().dump(2) + "\n");

  if (!test_set.empty()) {
    fr::EvalOptions opts;
    opts.tie_eps = cfg.tie_eps;
    const fr::EvalReport report =
        fr::evaluate_model(params, test_set, taxonomy, opts);
    write_text(args.out + "/eval_report.json", report.to_json().dump(2) + "\n");
    write_text(args.out + "/eval_report.csv", report.to_csv());
    std::cout << "held-out overall strict "
              << report.overall.strict << ", tie-aware "
              << report.overall.tie_aware << "\n";
  }
  return kExitOk;
}

struct EvalArgs {
  std::string params;
  std::string data;
  std::string out_json;
  std::string out_csv;
  std::string average_fold = "exclude";
  double tie_eps = 1e-6;
};

int cmd_eval(const EvalArgs& args) {
  const fr::LoadedParams loaded = fr::load_params(args.params);
  const auto dataset = fr::load_dataset(args.data, loaded.taxonomy);
  if (dataset.empty()) {
    throw fr::ValidationError("dataset \"" + args.data + "\" is empty");
  }
  fr::EvalOptions opts;
  opts.tie_eps = args.tie_eps;
  opts.average_fold = parse_fold(args.average_fold);
  const fr::EvalReport report =
      fr::evaluate_model(loaded.params, dataset, loaded.taxonomy, opts);
  std::cout << report.to_json().dump(2) << "\n";
  if (!args.out_json.empty()) {
    write_text(args.out_json, report.to_json().dump(2) + "\n");
  }
  if (!args.out_csv.empty()) {
    write_text(args.out_csv, report.to_csv());
  }
  return kExitOk;
}

struct ScoreArgs {
  std::string params;
  std::string features;
  std::string out;
};

int cmd_score(const ScoreArgs& args) {
  const fr::LoadedParams loaded = fr::load_params(args.params);

  std::ifstream f(args.features);
  if (!f) {
    throw fr::ValidationError("cannot open features file \"" + args.features +
                              "\"");
  }
  std::ostringstream out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw fr::ParseError(args.features + ":" + std::to_string(line_no) +
                           ": " + e.what());
    }
    fr::FeatureVector h;
    std::string id;
    try {
      id = j.at("id").get<std::string>();
      const auto vals = j.at("feature").get<std::vector<double>>();
      h = Eigen::Map<const fr::Vector>(vals.data(),
                                       static_cast<Eigen::Index>(vals.size()));
    } catch (const nlohmann::json::exception& e) {
      throw fr::ParseError(args.features + ":" + std::to_string(line_no) +
                           ": " + e.what());
    }
    const fr::HeadOutput o = fr::forward(loaded.params, h, loaded.taxonomy);
    nlohmann::json rec = {
        {"id", id},
        {"ar", std::vector<double>(o.ar.data(), o.ar.data() + o.ar.size())},
        {"criteria",
         std::vector<double>(o.criteria.data(),
                             o.criteria.data() + o.criteria.size())},
        {"aspect_sums",
         std::vector<double>(o.aspect_sums.data(),
                             o.aspect_sums.data() + o.aspect_sums.size())},
        {"os", o.os},
    };
    out << rec.dump() << "\n";
  }
  if (args.out.empty() || args.out == "-") {
    std::cout << out.str();
  } else {
    write_text(args.out, out.str());
  }
  return kExitOk;
}

struct GenSynthArgs {
  std::string out;
  int d = 32;
  int n_pairs = 100;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> teacher_seed;
  std::optional<std::uint64_t> data_seed;
  double label_noise_sd = 0.05;
  std::string tie_band = "0.05";
  int hidden_gate = 64;
  int hidden_criteria = 64;
  std::string teacher_out;
};

int cmd_gen_synth(const GenSynthArgs& args) {
  fr::SyntheticSpec spec;
  spec.d = args.d;
  spec.n_pairs = args.n_pairs;
  spec.teacher_seed = args.teacher_seed ? *args.teacher_seed
                                        : fr::derive_seed(args.seed, 10);
  spec.data_seed =
      args.data_seed ? *args.data_seed : fr::derive_seed(args.seed, 11);
  spec.label_noise_sd = args.label_noise_sd;
  spec.tie_band = (args.tie_band == "inf" || args.tie_band == "infinity")
                      ? std::numeric_limits<double>::infinity()
                      : std::stod(args.tie_band);
  spec.hidden_gate = args.hidden_gate;
  spec.hidden_criteria = args.hidden_criteria;

  const fr::SyntheticData data = fr::generate_synthetic(spec);
  fr::save_dataset(data.pairs, args.out, spec.taxonomy);
  const std::string teacher_path =
      args.teacher_out.empty() ? args.out + ".teacher.json" : args.teacher_out;
  fr::save_params(data.teacher, spec.taxonomy, teacher_path);
  std::cout << "wrote " << data.pairs.size() << " pairs to " << args.out
            << " (teacher: " << teacher_path << ")\n";
  return kExitOk;
}

struct GradcheckArgs {
  int stage = 0;  // 0 = all three
  std::uint64_t seed = 0;
  int d = 3;
  int batch = 2;
  double h_step = 1e-5;
  long cap = 20000;
  bool inject_fault = false;
};

int cmd_gradcheck(const GradcheckArgs& args) {
  fr::SyntheticSpec spec;
  spec.d = args.d;
  spec.taxonomy = fr::uniform_taxonomy(2, 2);
  spec.n_pairs = args.batch;
  spec.teacher_seed = fr::derive_seed(args.seed, 20);
  spec.data_seed = fr::derive_seed(args.seed, 21);
  spec.label_noise_sd = 0.25;
  spec.tie_band = 0.0;
  spec.hidden_gate = 4;
  spec.hidden_criteria = 4;
  const fr::SyntheticData data = fr::generate_synthetic(spec);

  std::function<void(fr::GradientSet&)> tamper;
  if (args.inject_fault) {
    tamper = [](fr::GradientSet& g) { g.score.weight(0, 0) += 1.0; };
  }

  const double tolerance = 1e-4;
  bool ok = true;
  nlohmann::json reports = nlohmann::json::object();
  for (int stage = 1; stage <= 3; ++stage) {
    if (args.stage != 0 && args.stage != stage) continue;
    const fr::FiniteDiffReport report = fr::finite_diff_check(
        stage, data.teacher, data.pairs, spec.taxonomy,
        fr::default_stage_weights(stage), args.h_step, args.cap, tamper);
    ok = ok && report.max_rel_err <= tolerance;
    reports[std::to_string(stage)] = report.to_json();
  }
  nlohmann::json out = {{"tolerance", tolerance},
                        {"pass", ok},
                        {"stages", reports}};
  std::cout << out.dump(2) << "\n";
  return ok ? kExitOk : kExitCheckFailed;
}

struct JudgeEvalArgs {
  std::string judge;
  std::string data;
  std::string out_json;
  std::string out_csv;
  std::string average_fold = "exclude";
};

int cmd_judge_eval(const JudgeEvalArgs& args) {
  const fr::CriteriaTaxonomy taxonomy = fr::dataset_taxonomy(args.data);
  const auto dataset = fr::load_dataset(args.data, taxonomy);
  if (dataset.empty()) {
    throw fr::ValidationError("dataset \"" + args.data + "\" is empty");
  }
  fr::EvalOptions opts;
  opts.average_fold = parse_fold(args.average_fold);
  const fr::EvalReport report =
      fr::evaluate_judge_file(args.judge, dataset, taxonomy, opts);
  std::cout << report.to_json().dump(2) << "\n";
  if (!args.out_json.empty()) {
    write_text(args.out_json, report.to_json().dump(2) + "\n");
  }
  if (!args.out_csv.empty()) {
    write_text(args.out_csv, report.to_csv());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "finereward: train, evaluate and run a fine-grained mixture-of-experts "
      "reward head over precomputed feature vectors"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand(
      "train", "three-stage training with a held-out 4:1 split");
  train->add_option("--data", train_args.data, "dataset JSONL")->required();
  train->add_option("--out", train_args.out, "output directory")->required();
  train->add_option("--config", train_args.config, "TrainConfig JSON file");
  train->add_option("--batch-size", train_args.batch_size);
  train->add_option("--lr", train_args.lr, "base learning rate");
  train->add_option("--warmup", train_args.warmup, "warmup steps");
  train->add_option("--epochs", train_args.epochs, "epochs per stage");
  train->add_option("--seed", train_args.seed);
  train->add_option("--tie-eps", train_args.tie_eps);
  train->add_option("--threads", train_args.threads);
  train->add_option("--weight-decay", train_args.weight_decay);
  train->add_option("--stage-weights", train_args.stage_weights,
                    "per-stage loss weights, STAGE:w1,w2,w3 (repeatable)");
  train->add_option("--hidden-gate", train_args.hidden_gate);
  train->add_option("--hidden-criteria", train_args.hidden_criteria);
  train->add_option("--split-train", train_args.split_train);
  train->add_option("--split-test", train_args.split_test);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "evaluate parameters on a dataset");
  eval->add_option("--params", eval_args.params)->required();
  eval->add_option("--data", eval_args.data)->required();
  eval->add_option("--out-json", eval_args.out_json);
  eval->add_option("--out-csv", eval_args.out_csv);
  eval->add_option("--tie-eps", eval_args.tie_eps);
  eval->add_option("--average-fold", eval_args.average_fold,
                   "exclude|good|bad");

  ScoreArgs score_args;
  auto* score = app.add_subcommand(
      "score", "score feature vectors, one JSONL record per input");
  score->add_option("--params", score_args.params)->required();
  score->add_option("--features", score_args.features,
                    "JSONL of {id, feature}")
      ->required();
  score->add_option("--out", score_args.out, "output path, '-' for stdout");

  GenSynthArgs synth_args;
  auto* synth = app.add_subcommand(
      "gen-synth", "generate a planted-teacher synthetic dataset");
  synth->add_option("--out", synth_args.out)->required();
  synth->add_option("--d", synth_args.d, "feature dimension");
  synth->add_option("--n-pairs", synth_args.n_pairs);
  synth->add_option("--seed", synth_args.seed, "master seed");
  synth->add_option("--teacher-seed", synth_args.teacher_seed,
                    "override derived teacher seed");
  synth->add_option("--data-seed", synth_args.data_seed,
                    "override derived data seed");
  synth->add_option("--label-noise-sd", synth_args.label_noise_sd);
  synth->add_option("--tie-band", synth_args.tie_band,
                    "margin band for same/tie labels, or 'inf'");
  synth->add_option("--hidden-gate", synth_args.hidden_gate);
  synth->add_option("--hidden-criteria", synth_args.hidden_criteria);
  synth->add_option("--teacher-out", synth_args.teacher_out);

  GradcheckArgs grad_args;
  auto* grad = app.add_subcommand(
      "gradcheck",
      "compare analytic gradients against central finite differences");
  grad->add_option("--stage", grad_args.stage, "1, 2, 3 or 0 for all");
  grad->add_option("--seed", grad_args.seed);
  grad->add_option("--d", grad_args.d);
  grad->add_option("--batch", grad_args.batch);
  grad->add_option("--h-step", grad_args.h_step);
  grad->add_option("--cap", grad_args.cap,
                   "refuse when the parameter count exceeds this");
  grad->add_flag("--inject-fault", grad_args.inject_fault)
      ->group("");  // test hook, hidden from --help

  JudgeEvalArgs judge_args;
  auto* judge = app.add_subcommand(
      "judge-eval", "evaluate an external judge's score file");
  judge->add_option("--judge", judge_args.judge, "judge scores JSONL")
      ->required();
  judge->add_option("--data", judge_args.data)->required();
  judge->add_option("--out-json", judge_args.out_json);
  judge->add_option("--out-csv", judge_args.out_csv);
  judge->add_option("--average-fold", judge_args.average_fold);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (score->parsed()) return cmd_score(score_args);
    if (synth->parsed()) return cmd_gen_synth(synth_args);
    if (grad->parsed()) return cmd_gradcheck(grad_args);
    if (judge->parsed()) return cmd_judge_eval(judge_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
