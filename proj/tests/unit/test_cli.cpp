// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cmath>
#include <functional>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "commands.hpp"
#include "singlem/checkpoint.hpp"
#include "singlem/error.hpp"
#include "singlem/signal_io.hpp"

namespace fs = std::filesystem;
using namespace singlem;
using singlem::cli::CommandOptions;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("singlem_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::UsageError;
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

const char* kPreprocessCfg =
    "preprocess.band_low_hz=0.5\npreprocess.band_high_hz=50\npreprocess.notch_hz=50\n"
    "preprocess.target_rate_hz=128\npreprocess.reject_threshold_uv=100\npreprocess.scale_factor=10000\n";

// Corpus: 4 subjects x 40 s, one channel.
void make_corpus(const fs::path& dir) {
  CommandOptions o;
  o.out = dir;
  o.seed = 5;
  o.overrides = {"synth.n_subjects=4", "synth.rate_hz=256", "synth.duration_s=40", "synth.n_classes=2",
                 "synth.noise_uv=3", "synth.components=10:30:1/0.2;21:25:0.2/1"};
  cli::cmd_synth(o);
}

CommandOptions tiny_pretrain(const fs::path& corpus, const fs::path& out) {
  CommandOptions o;
  o.out = out;
  o.seed = 11;
  o.inputs = {corpus};
  o.overrides = {"encoder.preset=compact", "pretrain.batch_size=2", "pretrain.steps=10",
                 "pretrain.min_seq_len=4", "pretrain.max_seq_len=6", "pretrain.lr_max=0.001"};
  return o;
}

// Labelled 5-s trials straight at 128 Hz.
void make_trials(const fs::path& dir, int subjects, int channels, int per_class) {
  CommandOptions o;
  o.out = dir;
  o.seed = 9;
  std::string names = "synth.channel_names=";
  for (int c = 0; c < channels; ++c) names += (c ? ",E" : "E") + std::to_string(c + 1);
  o.overrides = {"synth.n_subjects=" + std::to_string(subjects),
                 "synth.n_channels=" + std::to_string(channels),
                 names,
                 "synth.rate_hz=128",
                 "synth.noise_uv=2",
                 "synth.n_classes=2",
                 "synth.trial_s=5",
                 "synth.trials_per_class=" + std::to_string(per_class),
                 "synth.components=10:30:1/0.1;21:25:0.1/1"};
  cli::cmd_synth(o);
}

int run_binary(const std::string& args, std::string& err) {
  const char* bin = std::getenv("SINGLEM_BIN");
  REQUIRE(bin != nullptr);
  const fs::path err_file = fs::temp_directory_path() / ("singlem_cli_stderr_" + std::to_string(::getpid()));
  const std::string cmd = std::string(bin) + " " + args + " >/dev/null 2>" + err_file.string();
  const int status = std::system(cmd.c_str());
  err = slurp(err_file);
  fs::remove(err_file);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("synth writes one container per subject and a manifest") {
  TempDir t("synth");
  make_corpus(t.path / "corpus");
  CHECK(list_containers(t.path / "corpus").size() == 4);
  const std::string manifest = slurp(t.path / "corpus" / cli::kManifestName);
  CHECK(manifest.find("\"command\": \"synth\"") != std::string::npos);
  CHECK(manifest.find("\"seed\": 5") != std::string::npos);
  CHECK(manifest.find("wall_time_s") != std::string::npos);
}

TEST_CASE("seed is mandatory") {
  TempDir t("seedless");
  CommandOptions o;
  o.out = t.path;
  o.overrides = {"synth.n_subjects=1", "synth.rate_hz=128", "synth.duration_s=5", "synth.n_classes=1",
                 "synth.components=10:10"};
  try {
    cli::cmd_synth(o);
    FAIL("expected UsageError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UsageError);
    CHECK(std::string(e.what()).find("seed") != std::string::npos);
  }
}

TEST_CASE("preprocess resamples to 128 Hz and splits at artifacts") {
  TempDir t("pre");
  write(t.path / "pre.cfg", kPreprocessCfg);

  Recording rec;
  rec.subject_id = "S01";
  rec.sampling_rate_hz = 256;
  ChannelSignal ch{"Cz", std::vector<double>(256 * 60, 0.0), false};
  for (std::size_t i = 0; i < ch.samples.size(); ++i) ch.samples[i] = 20.0 * std::sin(0.2 * static_cast<double>(i));
  for (std::size_t i = 256 * 30; i < 256 * 30 + 64; ++i) ch.samples[i] += 300.0;
  rec.channels.push_back(ch);
  write_container(rec, t.path / "raw" / "spiky");

  CommandOptions o;
  o.config = t.path / "pre.cfg";
  o.out = t.path / "out";
  o.inputs = {t.path / "raw"};
  cli::cmd_preprocess(o);
  const auto outs = list_containers(t.path / "out");
  CHECK(outs.size() >= 2);
  for (const auto& p : outs) {
    const Recording seg = read_container(p);
    CHECK(seg.sampling_rate_hz == 128.0);
    CHECK(seg.channels.front().scaled);
  }
  CHECK(fs::exists(t.path / "out" / cli::kManifestName));
}

TEST_CASE("preprocess names the missing config key") {
  TempDir t("prekey");
  write(t.path / "pre.cfg", "preprocess.band_low_hz=0.5\n");
  make_corpus(t.path / "raw");
  CommandOptions o;
  o.config = t.path / "pre.cfg";
  o.out = t.path / "out";
  o.inputs = {t.path / "raw"};
  try {
    cli::cmd_preprocess(o);
    FAIL("expected UsageError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UsageError);
    CHECK(std::string(e.what()).find("preprocess.band_high_hz") != std::string::npos);
  }
}

TEST_CASE("flags override the config file") {
  TempDir t("flags");
  write(t.path / "c.cfg", std::string(kPreprocessCfg) + "seed=1\n");
  CommandOptions o;
  o.config = t.path / "c.cfg";
  o.seed = 99;
  o.notch_hz = 60;
  o.max_seq_len = 12;
  const auto kv = cli::effective_config(o);
  CHECK(kv.require("seed") == "99");
  CHECK(kv.require_double("preprocess.notch_hz") == 60.0);
  CHECK(kv.require("pretrain.max_seq_len") == "12");
  CHECK(cli::parse_fourier_arg("k=8") == 8.0);
  CHECK(cli::parse_fourier_arg("16") == 16.0);
  CHECK(code_of([] { cli::parse_fourier_arg("k=zero"); }) == ErrorCode::UsageError);
}

TEST_CASE("pretrain: loss rows, resume and integrity") {
  TempDir t("pretrain");
  make_corpus(t.path / "corpus");

  const auto full = tiny_pretrain(t.path / "corpus", t.path / "full");
  cli::cmd_pretrain(full);
  const std::string csv = slurp(t.path / "full" / "loss.csv");
  CHECK(count_lines(csv) == 11);  // header + 10 steps

  auto first = tiny_pretrain(t.path / "corpus", t.path / "half");
  first.stop_after = 5;
  cli::cmd_pretrain(first);
  CHECK(count_lines(slurp(t.path / "half" / "loss.csv")) == 6);

  auto second = tiny_pretrain(t.path / "corpus", t.path / "resumed");
  second.resume = t.path / "half" / "checkpoint.ckpt";
  cli::cmd_pretrain(second);
  CHECK(slurp(t.path / "resumed" / "checkpoint.ckpt") == slurp(t.path / "full" / "checkpoint.ckpt"));
  CHECK(slurp(t.path / "resumed" / "checkpoint.ckpt.bin") == slurp(t.path / "full" / "checkpoint.ckpt.bin"));
  CHECK(slurp(t.path / "resumed" / "loss.csv") == csv);

  SUBCASE("periodic checkpoints land on completed-step multiples") {
    auto periodic = tiny_pretrain(t.path / "corpus", t.path / "periodic");
    periodic.overrides.push_back("pretrain.checkpoint_every=4");
    cli::cmd_pretrain(periodic);
    CHECK(fs::exists(t.path / "periodic" / "checkpoint_step4.ckpt"));
    CHECK(fs::exists(t.path / "periodic" / "checkpoint_step8.ckpt"));
    CHECK_FALSE(fs::exists(t.path / "periodic" / "checkpoint_step1.ckpt"));
    const auto step4 = load_checkpoint(t.path / "periodic" / "checkpoint_step4.ckpt");
    CHECK(step4.meta.require_int("train.step") == 4);
    // Same weights; the manifest differs only in the echoed checkpoint_every.
    CHECK(slurp(t.path / "periodic" / "checkpoint.ckpt.bin") == slurp(t.path / "full" / "checkpoint.ckpt.bin"));
  }
  SUBCASE("resume with a different seed is rejected") {
    auto wrong = tiny_pretrain(t.path / "corpus", t.path / "wrong");
    wrong.seed = 12;
    wrong.resume = t.path / "half" / "checkpoint.ckpt";
    CHECK(code_of([&] { cli::cmd_pretrain(wrong); }) == ErrorCode::ConfigMismatch);
  }
  SUBCASE("tampered checkpoint fails the integrity check") {
    const fs::path bin = t.path / "half" / "checkpoint.ckpt.bin";
    std::string bytes = slurp(bin);
    bytes[bytes.size() / 2] ^= 0x01;
    std::ofstream(bin, std::ios::binary) << bytes;
    auto again = tiny_pretrain(t.path / "corpus", t.path / "again");
    again.resume = t.path / "half" / "checkpoint.ckpt";
    CHECK(code_of([&] { cli::cmd_pretrain(again); }) == ErrorCode::IntegrityError);
  }
}

TEST_CASE("extract: 27 channels x 5 s gives 2592 columns; Fourier switch; empty input") {
  TempDir t("extract");
  make_corpus(t.path / "corpus");
  auto pre = tiny_pretrain(t.path / "corpus", t.path / "model");
  pre.overrides.push_back("pretrain.steps=1");
  cli::cmd_pretrain(pre);

  make_trials(t.path / "trials", 1, 27, 1);
  CommandOptions o;
  o.out = t.path / "feat";
  o.inputs = {t.path / "trials"};
  o.checkpoint = t.path / "model" / "checkpoint.ckpt";
  cli::cmd_extract(o);
  const auto table = cli::read_features_csv(t.path / "feat" / "features.csv");
  CHECK(table.size() == 2);
  CHECK(table.x.cols == 2592);
  CHECK(table.channel_slices.size() == 27);

  o.checkpoint.reset();
  o.fourier_k = 8;
  o.out = t.path / "fourier";
  cli::cmd_extract(o);
  const auto ft = cli::read_features_csv(t.path / "fourier" / "features.csv");
  CHECK(ft.x.cols == 27u * 2u * 40u);  // 40 bins, magnitudes and phases

  fs::create_directories(t.path / "empty");
  o.inputs = {t.path / "empty"};
  o.out = t.path / "nothing";
  CHECK(code_of([&] { cli::cmd_extract(o); }) == ErrorCode::EmptyInput);
}

TEST_CASE("features CSV round-trips exactly") {
  TrialFeatures a{"S01", 1, {0.1, -2.5e-7, 3.0}, {{"C3", 0, 2}, {"C4", 2, 1}}};
  TrialFeatures b{"S02", 0, {1.0 / 3.0, 4.0, -0.0}, a.channel_slices};
  TempDir t("csv");
  write(t.path / "f.csv", cli::features_csv({a, b}));
  const auto table = cli::read_features_csv(t.path / "f.csv");
  REQUIRE(table.size() == 2);
  CHECK(table.x.data[0] == 0.1);
  CHECK(table.x.data[1] == -2.5e-7);
  CHECK(table.x.data[3] == 1.0 / 3.0);
  REQUIRE(table.channel_slices.size() == 2);
  CHECK(table.channel_slices[1].name == "C4");
  CHECK(table.channel_slices[1].offset == 2);
}

TEST_CASE("evaluate: one fold per subject, per-channel rows, reproducible") {
  TempDir t("eval");
  make_trials(t.path / "trials", 3, 2, 6);
  CommandOptions o;
  o.out = t.path / "feat";
  o.inputs = {t.path / "trials"};
  o.fourier_k = 2;
  cli::cmd_extract(o);

  CommandOptions e;
  e.seed = 3;
  e.inputs = {t.path / "feat" / "features.csv"};
  e.per_channel = true;
  e.overrides = {"eval.c_grid=0.1,1,10", "eval.gamma_grid=0.01,0.1"};
  e.out = t.path / "r1";
  cli::cmd_evaluate(e);
  e.out = t.path / "r2";
  cli::cmd_evaluate(e);

  const std::string report = slurp(t.path / "r1" / "report.csv");
  CHECK(count_lines(report) == 1 + 3 + 2);  // header, folds, mean, std
  CHECK(count_lines(slurp(t.path / "r1" / "per_channel.csv")) == 1 + 2);
  CHECK(report == slurp(t.path / "r2" / "report.csv"));
  CHECK(slurp(t.path / "r1" / "summary.md") == slurp(t.path / "r2" / "summary.md"));
  CHECK(slurp(t.path / "r1" / "per_channel.csv") == slurp(t.path / "r2" / "per_channel.csv"));

  SUBCASE("trials plus Fourier features give the same report") {
    CommandOptions d = e;
    d.inputs = {t.path / "trials"};
    d.fourier_k = 2;
    d.per_channel = false;
    d.out = t.path / "r3";
    cli::cmd_evaluate(d);
    CHECK(slurp(t.path / "r3" / "report.csv") == report);
  }
}

TEST_CASE("binary: exit codes and error codes on stderr") {
  TempDir t("bin");
  std::string err;
  CHECK(run_binary("--version", err) == 0);
  CHECK(run_binary("evaluate --seed 1 --out " + (t.path / "o").string() + " " + (t.path / "missing").string(), err) == 1);
  CHECK(err.find("error[IoFailure]") != std::string::npos);
  CHECK(run_binary("synth --out " + (t.path / "o").string(), err) == 2);
  CHECK(err.find("error[UsageError]") != std::string::npos);
  CHECK(run_binary("preprocess --notch 55 --out x y", err) == 2);
  CHECK(err.find("error[UsageError]") != std::string::npos);

  write(t.path / "s.cfg",
        "synth.n_subjects=2\nsynth.rate_hz=128\nsynth.duration_s=20\nsynth.n_classes=2\nsynth.components=10:20\n");
  CHECK(run_binary("synth --config " + (t.path / "s.cfg").string() + " --seed 4 --out " + (t.path / "ok").string(),
                   err) == 0);
  CHECK(err.empty());
  CHECK(list_containers(t.path / "ok").size() == 2);
}
