// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "singlem/error.hpp"

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

struct RawFlags {
  std::string config, out, checkpoint, resume, fourier;
  std::vector<std::string> inputs, set;
  long long seed = -1;
  int notch = 0;
  long long max_seq_len = 0;
  long long stop_after = 0;
  bool per_channel = false;
};

singlem::cli::CommandOptions to_options(const RawFlags& f) {
  using singlem::Error;
  using singlem::ErrorCode;
  singlem::cli::CommandOptions o;
  if (!f.config.empty()) o.config = f.config;
  o.overrides = f.set;
  if (f.seed >= 0) o.seed = static_cast<std::uint64_t>(f.seed);
  o.out = f.out;
  for (const auto& p : f.inputs) o.inputs.emplace_back(p);
  if (!f.checkpoint.empty()) o.checkpoint = f.checkpoint;
  if (!f.resume.empty()) o.resume = f.resume;
  if (f.notch != 0) o.notch_hz = f.notch;
  if (f.max_seq_len > 0) o.max_seq_len = static_cast<std::size_t>(f.max_seq_len);
  if (f.stop_after > 0) o.stop_after = f.stop_after;
  if (!f.fourier.empty()) o.fourier_k = singlem::cli::parse_fourier_arg(f.fourier);
  o.per_channel = f.per_channel;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-channel EEG representation learning: preprocessing, pretraining and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SINGLEM_VERSION);
  RawFlags f;

  auto common = [&](CLI::App* sub, bool needs_inputs) {
    sub->add_option("--config", f.config, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", f.set, "extra key=value override (repeatable)");
    sub->add_option("--seed", f.seed, "random seed (overrides the config)")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", f.out, "output directory")->required();
    auto* in = sub->add_option("inputs", f.inputs, "input containers, directories or a features CSV");
    if (needs_inputs) in->required();
  };

  auto* synth = app.add_subcommand("synth", "write synthetic recordings or labelled trials");
  common(synth, false);

  auto* preprocess = app.add_subcommand("preprocess", "filter, resample, reject and scale recordings");
  common(preprocess, true);
  preprocess->add_option("--notch", f.notch, "mains notch frequency")->check(CLI::IsMember({50, 60}));

  auto* pretrain = app.add_subcommand("pretrain", "masked-autoencoder pretraining on a corpus");
  common(pretrain, true);
  pretrain->add_option("--notch", f.notch, "mains notch for raw inputs")->check(CLI::IsMember({50, 60}));
  pretrain->add_option("--max-seq-len", f.max_seq_len, "longest token sequence")->check(CLI::PositiveNumber);
  pretrain->add_option("--resume", f.resume, "continue from this checkpoint")->check(CLI::ExistingFile);
  pretrain->add_option("--stop-after", f.stop_after, "stop once this step is reached")->check(CLI::PositiveNumber);

  auto* extract = app.add_subcommand("extract", "per-trial feature vectors");
  common(extract, true);
  extract->add_option("--checkpoint", f.checkpoint, "pretrained checkpoint")->check(CLI::ExistingFile);
  extract->add_option("--fourier", f.fourier, "Fourier baseline, e.g. k=8");
  extract->add_option("--notch", f.notch, "mains notch for raw trials")->check(CLI::IsMember({50, 60}));

  auto* evaluate = app.add_subcommand("evaluate", "leave-one-subject-out SVM evaluation");
  common(evaluate, true);
  evaluate->add_option("--checkpoint", f.checkpoint, "pretrained checkpoint (trial inputs)")->check(CLI::ExistingFile);
  evaluate->add_option("--fourier", f.fourier, "Fourier baseline, e.g. k=8 (trial inputs)");
  evaluate->add_option("--notch", f.notch, "mains notch for raw trials")->check(CLI::IsMember({50, 60}));
  evaluate->add_flag("--per-channel", f.per_channel, "also evaluate every channel alone");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error[" << singlem::to_string(singlem::ErrorCode::UsageError) << "]: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    const auto opt = to_options(f);
    singlem::cli::RunManifest m;
    if (synth->parsed()) m = singlem::cli::cmd_synth(opt);
    else if (preprocess->parsed()) m = singlem::cli::cmd_preprocess(opt);
    else if (pretrain->parsed()) m = singlem::cli::cmd_pretrain(opt);
    else if (extract->parsed()) m = singlem::cli::cmd_extract(opt);
    else m = singlem::cli::cmd_evaluate(opt);
    std::cout << m.command << ": wrote " << m.outputs.size() << " output(s) to " << opt.out.string() << "\n";
  } catch (const singlem::Error& e) {
    std::cerr << "error[" << singlem::to_string(e.code()) << "]: " << e.what() << "\n";
    return e.code() == singlem::ErrorCode::UsageError ? kExitUsage : kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error[Internal]: " << e.what() << "\n";
    return kExitError;
  }
  return 0;
}
