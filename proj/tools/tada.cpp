// Copyright 2026 The TADA Authors. All Rights Reserved.
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

// tada: command-line driver for target synthesis, embedding, emulator
// training, source emission, regret evaluation and reporting.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "tada/experiment.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> kernel_size;
  std::optional<int> qf;
  std::optional<double> payload;
  std::optional<std::string> balance;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "experiment config (JSON)");
  cmd->add_option("--seed", o.seed, "seed for embedding and training");
  cmd->add_option("--kernel-size", o.kernel_size, "emulator kernel size (3, 5 or 7)");
  cmd->add_option("--qf", o.qf, "JPEG quality factor");
  cmd->add_option("--payload", o.payload, "payload in bits per nonzero AC coefficient");
  cmd->add_option("--balance", o.balance, "all-cover, all-stego or mix");
  cmd->add_option("--out", o.out, "output directory");
}

tada::ExperimentConfig resolve(const Overrides& o) {
  tada::ExperimentConfig c = o.config.empty() ? tada::default_experiment_config()
                                              : tada::load_experiment_config(o.config);
  if (o.seed) c.seed = c.train.seed = *o.seed;
  if (o.kernel_size) c.kernel_size = c.train.kernel_size = *o.kernel_size;
  if (o.qf) c.qf = *o.qf;
  if (o.payload) c.payload = *o.payload;
  if (o.balance) c.balance = tada::parse_balance(*o.balance);
  if (o.out) c.out = std::filesystem::path(*o.out);
  return c;
}

int run(const std::string& command, const tada::ExperimentConfig& c) {
  if (command == "synth-target") {
    const auto m = tada::cmd_synth_target(c);
    std::printf("wrote %zu target images (%zu stego) and %zu pairs to %s\n",
                m["counts"]["unlabeled"].get<std::size_t>(), m["counts"]["stego"].get<std::size_t>(),
                m["counts"]["pairs"].get<std::size_t>(), c.out->string().c_str());
  } else if (command == "embed") {
    const auto m = tada::cmd_embed(c);
    std::printf("embedded %zu images into %s\n", m["items"].size(), c.out->string().c_str());
  } else if (command == "train") {
    const auto o = tada::cmd_train(c, [](const tada::EpochLog& e, const tada::EmulatorPipeline&) {
      std::fprintf(stderr, "epoch %d loss %.6g\n", e.epoch, e.total);
    });
    const auto& r = o.result;
    if (r.stopped_early) {
      std::printf("early stop at epoch %d (no improvement for %d epochs)\n", r.epochs_run,
                  c.train.patience);
    }
    std::printf("best epoch %d, loss %.9g\n%s", r.best_epoch, r.best_loss,
                tada::kernel_grid_text(r.pipeline.kernel).c_str());
  } else if (command == "emit-source") {
    const auto m = tada::cmd_emit_source(c);
    std::printf("wrote %zu source pairs to %s\n", m["counts"]["pairs"].get<std::size_t>(),
                c.out->string().c_str());
  } else if (command == "evaluate") {
    std::printf("%s\n", tada::cmd_evaluate(c).dump(2).c_str());
  } else if (command == "report") {
    tada::cmd_report(c);
    std::printf("wrote %s\n", (*c.out / "table.csv").string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emulate an unknown image pipeline and build matched steganalysis sources."};
  app.require_subcommand(1);
  Overrides o;
  const char* commands[][2] = {
      {"synth-target", "synthesize a toy target (unlabeled set and labeled pairs)"},
      {"embed", "embed UERD payloads into coefficient archives"},
      {"train", "learn the emulator from an unlabeled target"},
      {"emit-source", "develop and embed a source with a kernel file"},
      {"evaluate", "regret of naive and learned sources on a target"},
      {"report", "aggregate reports and loss logs into tables"}};
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, resolve(o));
  } catch (const tada::Error& e) {
    std::fprintf(stderr, "tada %s: %s\n", command.c_str(), e.what());
    return e.kind() == tada::ErrorKind::kConfig ? 1 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "tada %s: %s\n", command.c_str(), e.what());
    return 2;
  }
}
