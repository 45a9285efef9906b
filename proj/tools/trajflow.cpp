// Copyright 2026 The trajflow Authors
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

#include "trajflow/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char ** argv)
{
  namespace cli = trajflow::cli;

  CLI::App app{"trajflow: conditional normalizing-flow trajectory forecasting"};
  app.set_version_flag("--version", std::string(trajflow::kToolVersion));
  app.require_subcommand(1);

  cli::TrainRequest train;
  std::uint64_t train_seed = 0;
  std::string train_out;
  auto * train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("--config", train.config_path, "INI run configuration")->required();
  auto * train_seed_opt = train_cmd->add_option("--seed", train_seed, "override train.seed");
  auto * train_out_opt = train_cmd->add_option("--out", train_out, "override output.dir");
  train_cmd->add_flag("--quiet", train.quiet, "do not print per-epoch losses");

  cli::PredictRequest predict;
  std::size_t top_k = 0;
  std::string predict_out;
  auto * predict_cmd = app.add_subcommand("predict", "sample futures for the windows in a window file");
  predict_cmd->add_option("--checkpoint", predict.checkpoint, "model checkpoint")->required();
  predict_cmd->add_option("--dataset", predict.windows_path, "window file (see the windows command)")->required();
  predict_cmd->add_option("--samples", predict.samples, "futures drawn per window")->capture_default_str();
  auto * top_k_opt = predict_cmd->add_option("--top-k", top_k, "keep only the k most likely of --samples");
  predict_cmd->add_option("--seed", predict.seed, "sampling seed")->capture_default_str();
  auto * predict_out_opt = predict_cmd->add_option("--out", predict_out, "output file (default: stdout)");

  cli::EvaluateRequest evaluate;
  std::string eval_format;
  std::string eval_config;
  std::size_t eval_samples = 0;
  std::string eval_out;
  auto * eval_cmd = app.add_subcommand("evaluate", "compute displacement metrics on one or more scenes");
  eval_cmd->add_option("--checkpoint", evaluate.checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--dataset", evaluate.datasets, "dataset file, one scene per file (repeatable)");
  auto * eval_format_opt = eval_cmd->add_option("--format", eval_format, "eth-ucy-text or drone-text");
  auto * eval_config_opt = eval_cmd->add_option("--config", eval_config, "run configuration (window and eval keys)");
  auto * eval_samples_opt = eval_cmd->add_option("--samples", eval_samples, "samples per window");
  eval_cmd->add_option("--seed", evaluate.seed, "sampling seed")->capture_default_str();
  auto * eval_out_opt = eval_cmd->add_option("--out", eval_out, "directory for metrics.txt and rank_curve.csv");

  cli::GradcheckRequest gradcheck;
  std::string gc_config;
  auto * gc_cmd = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  auto * gc_config_opt = gc_cmd->add_option("--config", gc_config, "run configuration (flow and noise keys)");
  gc_cmd->add_option("--seed", gradcheck.seed, "model seed")->capture_default_str();
  gc_cmd->add_option("--tolerance", gradcheck.tolerance, "maximum relative error")->capture_default_str();

  std::string inspect_ckpt;
  auto * inspect_cmd = app.add_subcommand("inspect", "print a checkpoint's configuration and parameters");
  inspect_cmd->add_option("--checkpoint", inspect_ckpt, "model checkpoint")->required();

  cli::WindowsRequest windows;
  std::string win_format;
  std::string win_config;
  std::string win_out;
  bool training_windows = false;
  auto * win_cmd = app.add_subcommand("windows", "export observation/future windows of a dataset");
  win_cmd->add_option("--dataset", windows.dataset, "dataset file")->required();
  auto * win_format_opt = win_cmd->add_option("--format", win_format, "eth-ucy-text or drone-text");
  auto * win_config_opt = win_cmd->add_option("--config", win_config, "run configuration (data keys)");
  win_cmd->add_flag("--training", training_windows, "full windows only");
  auto * win_out_opt = win_cmd->add_option("--out", win_out, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitUsage;
  }

  try {
    if (*train_cmd) {
      if (*train_seed_opt) {
        train.seed = train_seed;
      }
      if (*train_out_opt) {
        train.out_dir = train_out;
      }
      return cli::cmd_train(train, std::cout);
    }
    if (*predict_cmd) {
      if (*top_k_opt) {
        predict.top_k = top_k;
      }
      if (*predict_out_opt) {
        predict.out_path = predict_out;
      }
      return cli::cmd_predict(predict, std::cout);
    }
    if (*eval_cmd) {
      if (*eval_format_opt) {
        evaluate.format = eval_format;
      }
      if (*eval_config_opt) {
        evaluate.config_path = eval_config;
      }
      if (*eval_samples_opt) {
        evaluate.samples = eval_samples;
      }
      if (*eval_out_opt) {
        evaluate.out_dir = eval_out;
      }
      return cli::cmd_evaluate(evaluate, std::cout);
    }
    if (*gc_cmd) {
      if (*gc_config_opt) {
        gradcheck.config_path = gc_config;
      }
      return cli::cmd_gradcheck(gradcheck, std::cout);
    }
    if (*inspect_cmd) {
      return cli::cmd_inspect(inspect_ckpt, std::cout);
    }
    if (*win_cmd) {
      if (*win_format_opt) {
        windows.format = win_format;
      }
      if (*win_config_opt) {
        windows.config_path = win_config;
      }
      if (*win_out_opt) {
        windows.out_path = win_out;
      }
      windows.evaluation_mode = !training_windows;
      return cli::cmd_windows(windows, std::cout);
    }
  } catch (const trajflow::Error & e) {
    std::cerr << "trajflow: " << e.what() << '\n';
    return cli::exit_code_for(e);
  } catch (const std::filesystem::filesystem_error & e) {
    std::cerr << "trajflow: " << e.what() << '\n';
    return cli::kExitData;
  }
  return cli::kExitUsage;
}
