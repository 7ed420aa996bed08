// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "singlem/checkpoint.hpp"
#include "singlem/dsp.hpp"
#include "singlem/error.hpp"
#include "singlem/pretrain.hpp"
#include "singlem/rng.hpp"
#include "singlem/signal_io.hpp"
#include "singlem/tokenizer.hpp"

#ifndef SINGLEM_VERSION
#define SINGLEM_VERSION "0.0.0"
#endif

namespace singlem::cli {
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double to_double(const std::string& text, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::UsageError, what + ": not a number: '" + text + "'");
  }
}

std::vector<double> double_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) out.push_back(to_double(trim(part), what));
  if (out.empty()) throw Error(ErrorCode::UsageError, what + ": empty list");
  return out;
}

std::uint64_t require_seed(const KeyValueFile& kv) {
  const long long s = kv.require_int("seed");
  if (s < 0) throw Error(ErrorCode::UsageError, "key 'seed' must be non-negative");
  return static_cast<std::uint64_t>(s);
}

// File names keep letters, digits, '-' and '_'.
std::string safe_name(const std::string& s) {
  std::string out = s;
  for (auto& ch : out) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  }
  return out;
}

fs::path strip_container_ext(const fs::path& p) {
  const auto ext = p.extension();
  if (ext == ".sgh" || ext == ".sgb") return fs::path(p).replace_extension();
  return p;
}

// Containers named on the command line, expanding directories.
std::vector<fs::path> collect_containers(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (auto& p : list_containers(in)) out.push_back(p);
    } else {
      const auto stem = strip_container_ext(in);
      if (!fs::exists(header_path(stem))) throw Error(ErrorCode::IoFailure, "no container at '" + in.string() + "'");
      out.push_back(stem);
    }
  }
  if (out.empty()) throw Error(ErrorCode::EmptyInput, "no containers found in the given inputs");
  return out;
}

// Same code, message prefixed with where it happened.
[[noreturn]] void rethrow_with_context(const Error& e, const std::string& where) {
  throw Error(e.code(), where + ": " + e.what());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create '" + dir.string() + "': " + ec.message());
}

void require_out(const CommandOptions& opt) {
  if (opt.out.empty()) throw Error(ErrorCode::UsageError, "--out is required");
  ensure_dir(opt.out);
}

std::vector<std::string> path_strings(const std::vector<fs::path>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) out.push_back(p.string());
  return out;
}

// Pipeline settings. With `strict`, the pipeline keys must all be present.
dsp::PreprocessConfig read_preprocess(const KeyValueFile& kv, dsp::PreprocessConfig base, bool strict) {
  auto num = [&](const std::string& key, double fallback) {
    const std::string k = "preprocess." + key;
    return strict ? kv.require_double(k) : kv.get_double(k, fallback);
  };
  base.band_low_hz = num("band_low_hz", base.band_low_hz);
  base.band_high_hz = num("band_high_hz", base.band_high_hz);
  base.notch_hz = num("notch_hz", base.notch_hz);
  base.target_rate_hz = num("target_rate_hz", base.target_rate_hz);
  base.reject_threshold_uv = num("reject_threshold_uv", base.reject_threshold_uv);
  base.scale_factor = num("scale_factor", base.scale_factor);
  base.reject_enabled = kv.get_int("preprocess.reject_enabled", base.reject_enabled ? 1 : 0) != 0;
  base.num_taps = static_cast<int>(kv.get_int("preprocess.num_taps", base.num_taps));
  if (base.notch_hz != 50.0 && base.notch_hz != 60.0) {
    throw Error(ErrorCode::UsageError, "notch must be 50 or 60 Hz");
  }
  return base;
}

EncoderConfig read_encoder(const KeyValueFile& kv) {
  const std::string preset = kv.get_string("encoder.preset", "standard");
  EncoderConfig base;
  if (preset == "standard") base = EncoderConfig::standard();
  else if (preset == "compact") base = EncoderConfig::compact();
  else if (preset == "toy") base = EncoderConfig::toy();
  else throw Error(ErrorCode::UsageError, "unknown encoder.preset '" + preset + "'");
  KeyValueFile merged;
  base.write(merged);
  for (const auto& [k, v] : kv.entries()) {
    if (starts_with(k, "encoder.") && k != "encoder.preset") merged.set(k, v);
  }
  return EncoderConfig::read(merged);
}

TokenizerParams tokenizer_for(const EncoderConfig& ec) {
  TokenizerParams tp;
  tp.token_len = ec.token_len;
  return tp;
}

Trial to_trial(const Recording& rec, const dsp::PreprocessConfig& cfg) {
  if (!rec.label) throw Error(ErrorCode::InvalidSpec, "trial container has no label");
  const bool ready = std::all_of(rec.channels.begin(), rec.channels.end(), [](const auto& c) { return c.scaled; });
  if (ready && rec.sampling_rate_hz == cfg.target_rate_hz) {
    Trial t;
    t.subject_id = rec.subject_id;
    t.label = *rec.label;
    t.sampling_rate_hz = rec.sampling_rate_hz;
    for (const auto& ch : rec.channels) {
      t.channel_names.push_back(ch.name);
      t.channels.push_back(ch.samples);
    }
    return t;
  }
  return make_trial(rec, cfg);
}

// Features for every trial container, in sorted container order.
std::vector<TrialFeatures> features_from_trials(const CommandOptions& opt, const KeyValueFile& kv,
                                                std::vector<fs::path>& used_inputs) {
  const auto stems = collect_containers(opt.inputs);
  const auto pre = read_preprocess(kv, dsp::PreprocessConfig::for_trials(), false);
  std::optional<Encoder> encoder;
  if (!opt.fourier_k) {
    if (!opt.checkpoint) throw Error(ErrorCode::UsageError, "--checkpoint or --fourier is required");
    try {
      encoder.emplace(load_encoder(load_checkpoint(*opt.checkpoint)));
    } catch (const Error& e) {
      rethrow_with_context(e, opt.checkpoint->string());
    }
    used_inputs.push_back(*opt.checkpoint);
  }
  std::vector<TrialFeatures> rows;
  for (const auto& stem : stems) {
    try {
      const Trial trial = to_trial(read_container(stem), pre);
      rows.push_back(opt.fourier_k ? fourier_features(trial, *opt.fourier_k) : extract_features(trial, *encoder));
    } catch (const Error& e) {
      rethrow_with_context(e, stem.string());
    }
  }
  used_inputs.insert(used_inputs.end(), stems.begin(), stems.end());
  return rows;
}

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

RunManifest finish(RunManifest m, const CommandOptions& opt, Clock::time_point t0) {
  m.wall_time_s = std::chrono::duration<double>(Clock::now() - t0).count();
  write_text(opt.out / kManifestName, m.json());
  return m;
}

}  // namespace

std::string RunManifest::json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["tool_version"] = SINGLEM_VERSION;
  j["seed"] = seed ? nlohmann::ordered_json(*seed) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config.entries()) cfg[k] = v;
  j["config"] = cfg;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["wall_time_s"] = wall_time_s;
  return j.dump(2) + "\n";
}

KeyValueFile effective_config(const CommandOptions& opt) {
  KeyValueFile kv = opt.config ? KeyValueFile::load(*opt.config) : KeyValueFile{};
  for (const auto& pair : opt.overrides) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::UsageError, "--set expects key=value, got '" + pair + "'");
    kv.set(trim(pair.substr(0, eq)), trim(pair.substr(eq + 1)));
  }
  if (opt.seed) kv.set("seed", std::to_string(*opt.seed));
  if (opt.notch_hz) kv.set("preprocess.notch_hz", format_double(*opt.notch_hz));
  if (opt.max_seq_len) {
    kv.set("pretrain.max_seq_len", std::to_string(*opt.max_seq_len));
    kv.set("encoder.max_seq_len", std::to_string(*opt.max_seq_len));
  }
  return kv;
}

double parse_fourier_arg(const std::string& text) {
  std::string t = trim(text);
  if (starts_with(t, "k=")) t = t.substr(2);
  const double k = to_double(t, "--fourier");
  if (!(k > 0.0)) throw Error(ErrorCode::UsageError, "--fourier needs k > 0");
  return k;
}

RunManifest cmd_synth(const CommandOptions& opt) {
  const auto t0 = Clock::now();
  require_out(opt);
  const KeyValueFile kv = effective_config(opt);
  SyntheticSpec spec;
  spec.seed = require_seed(kv);
  spec.n_subjects = static_cast<int>(kv.require_int("synth.n_subjects"));
  spec.n_channels = static_cast<int>(kv.get_int("synth.n_channels", 1));
  spec.sampling_rate_hz = kv.require_double("synth.rate_hz");
  spec.noise_std_uv = kv.get_double("synth.noise_uv", 0.0);
  spec.random_phase = kv.get_int("synth.random_phase", 1) != 0;
  const int n_classes = static_cast<int>(kv.require_int("synth.n_classes"));
  if (n_classes < 1) throw Error(ErrorCode::UsageError, "synth.n_classes must be at least 1");
  if (auto names = kv.get("synth.channel_names")) {
    for (const auto& n : split(*names, ',')) spec.channel_names.push_back(trim(n));
  }
  // center:amplitude:gain0/gain1/... ; repeated
  for (const auto& item : split(kv.require("synth.components"), ';')) {
    if (trim(item).empty()) continue;
    const auto f = split(trim(item), ':');
    if (f.size() < 2 || f.size() > 3) throw Error(ErrorCode::UsageError, "synth.components: bad entry '" + item + "'");
    BandComponent c;
    c.center_hz = to_double(trim(f[0]), "synth.components");
    c.amplitude_uv = to_double(trim(f[1]), "synth.components");
    if (f.size() == 3) {
      for (const auto& g : split(f[2], '/')) c.class_gain.push_back(to_double(trim(g), "synth.components"));
    }
    spec.band_components.push_back(std::move(c));
  }
  const double trial_s = kv.get_double("synth.trial_s", 0.0);
  const long long per_class = kv.get_int("synth.trials_per_class", 0);
  const bool trials = trial_s > 0.0;
  if (trials && per_class < 1) throw Error(ErrorCode::UsageError, "synth.trials_per_class must be positive with synth.trial_s");
  spec.duration_s = trials ? trial_s : kv.require_double("synth.duration_s");

  RunManifest m{"synth", kv, spec.seed, {}, {}, 0.0};
  auto subject_name = [&](int s) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "S%02d", s + 1);
    return std::string(buf);
  };
  for (int s = 0; s < spec.n_subjects; ++s) {
    if (!trials) {
      Recording rec = generate_synthetic(spec, s % n_classes, s);
      rec.subject_id = subject_name(s);
      const fs::path stem = opt.out / rec.subject_id;
      write_container(rec, stem);
      m.outputs.push_back(header_path(stem).string());
      continue;
    }
    // Each trial is an independent draw; cutting one long recording would give
    // every trial of a subject and class the same phases.
    for (int c = 0; c < n_classes; ++c) {
      for (long long t = 0; t < per_class; ++t) {
        SyntheticSpec one = spec;
        one.seed = mix_seed(spec.seed, static_cast<std::uint64_t>(t));
        Recording rec = generate_synthetic(one, c, s);
        rec.subject_id = subject_name(s);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%s_c%d_t%03lld", rec.subject_id.c_str(), c, t);
        const fs::path stem = opt.out / buf;
        write_container(rec, stem);
        m.outputs.push_back(header_path(stem).string());
      }
    }
  }
  return finish(std::move(m), opt, t0);
}

RunManifest cmd_preprocess(const CommandOptions& opt) {
  const auto t0 = Clock::now();
  require_out(opt);
  const KeyValueFile kv = effective_config(opt);
  const auto cfg = read_preprocess(kv, {}, true);
  const auto stems = collect_containers(opt.inputs);
  RunManifest m{"preprocess", kv, std::nullopt, path_strings(stems), {}, 0.0};
  for (const auto& stem : stems) {
    Recording rec;
    try {
      rec = read_container(stem);
    } catch (const Error& e) {
      rethrow_with_context(e, stem.string());
    }
    const std::string base = stem.filename().string();
    for (const auto& ch : rec.channels) {
      const std::string where = stem.string() + " channel " + ch.name;
      if (ch.scaled) throw Error(ErrorCode::InvalidSpec, where + ": already preprocessed");
      std::vector<std::vector<double>> segments;
      try {
        segments = dsp::preprocess_channel(ch.samples, rec.sampling_rate_hz, cfg);
      } catch (const Error& e) {
        rethrow_with_context(e, where);
      }
      for (std::size_t k = 0; k < segments.size(); ++k) {
        Recording seg;
        seg.subject_id = rec.subject_id;
        seg.label = rec.label;
        seg.sampling_rate_hz = cfg.target_rate_hz;
        seg.channels.push_back({ch.name, std::move(segments[k]), true});
        const fs::path out_stem = opt.out / (base + "_" + safe_name(ch.name) + "_" + std::to_string(k));
        write_container(seg, out_stem);
        m.outputs.push_back(header_path(out_stem).string());
      }
    }
  }
  return finish(std::move(m), opt, t0);
}

RunManifest cmd_pretrain(const CommandOptions& opt) {
  const auto t0 = Clock::now();
  require_out(opt);
  KeyValueFile kv = effective_config(opt);
  const std::uint64_t seed = require_seed(kv);
  kv.set("pretrain.seed", std::to_string(seed));

  std::optional<Pretrainer> trainer;
  std::vector<fs::path> used;
  if (opt.resume) {
    Checkpoint ckpt;
    try {
      ckpt = load_checkpoint(*opt.resume);
    } catch (const Error& e) {
      rethrow_with_context(e, opt.resume->string());
    }
    trainer.emplace(Pretrainer::from_checkpoint(ckpt));
    // Any model/training key that was given must agree with the checkpoint.
    KeyValueFile merged = ckpt.meta;
    for (const auto& [k, v] : kv.entries()) {
      if ((starts_with(k, "encoder.") && k != "encoder.preset") || starts_with(k, "pretrain.")) merged.set(k, v);
    }
    KeyValueFile a, b;
    EncoderConfig::read(merged).write(a);
    PretrainConfig::read(merged).write(a);
    trainer->encoder().config().write(b);
    trainer->config().write(b);
    if (a.serialize() != b.serialize()) {
      throw Error(ErrorCode::ConfigMismatch, "configuration differs from the checkpoint being resumed");
    }
    if (kv.contains("encoder.preset") && !(read_encoder(kv) == trainer->encoder().config())) {
      throw Error(ErrorCode::ConfigMismatch, "encoder preset differs from the checkpoint being resumed");
    }
    used.push_back(*opt.resume);
  }

  const EncoderConfig ec = trainer ? trainer->encoder().config() : read_encoder(kv);
  const PretrainConfig pc = trainer ? trainer->config() : PretrainConfig::read(kv);
  const auto pre = read_preprocess(kv, {}, false);

  const auto stems = collect_containers(opt.inputs);
  std::vector<std::vector<double>> segments;
  for (const auto& stem : stems) {
    try {
      const Recording rec = read_container(stem);
      for (const auto& ch : rec.channels) {
        if (ch.scaled) {
          if (rec.sampling_rate_hz != pre.target_rate_hz) {
            throw Error(ErrorCode::InvalidSpec, "scaled channel at " + format_double(rec.sampling_rate_hz) +
                                                    " Hz, expected " + format_double(pre.target_rate_hz));
          }
          segments.push_back(ch.samples);
        } else {
          for (auto& s : dsp::preprocess_channel(ch.samples, rec.sampling_rate_hz, pre)) segments.push_back(std::move(s));
        }
      }
    } catch (const Error& e) {
      rethrow_with_context(e, stem.string());
    }
  }
  used.insert(used.end(), stems.begin(), stems.end());
  const TokenStream corpus = build_stream(segments, tokenizer_for(ec));
  if (corpus.empty()) throw Error(ErrorCode::EmptyInput, "corpus holds no complete token");

  if (!trainer) trainer.emplace(ec, pc, Pretrainer::derive_total_steps(pc, corpus));

  RunManifest m{"pretrain", kv, seed, path_strings(used), {}, 0.0};
  const fs::path final_ckpt = opt.out / "checkpoint.ckpt";
  const fs::path loss_csv = opt.out / "loss.csv";
  std::vector<fs::path> periodic;
  // Named by completed steps; the final state always goes to checkpoint.ckpt.
  trainer->train(corpus, opt.stop_after, [&](const Pretrainer& t, const LossRecord&) {
    const std::int64_t done = t.current_step();
    if (pc.checkpoint_every > 0 && done % pc.checkpoint_every == 0 && done < t.total_steps()) {
      const fs::path p = opt.out / ("checkpoint_step" + std::to_string(done) + ".ckpt");
      save_checkpoint(p, t.to_checkpoint());
      periodic.push_back(p);
    }
  });
  save_checkpoint(final_ckpt, trainer->to_checkpoint());
  write_text(loss_csv, loss_history_csv(trainer->history()));
  for (const auto& p : periodic) m.outputs.push_back(p.string());
  m.outputs.push_back(final_ckpt.string());
  m.outputs.push_back(loss_csv.string());
  return finish(std::move(m), opt, t0);
}

RunManifest cmd_extract(const CommandOptions& opt) {
  const auto t0 = Clock::now();
  require_out(opt);
  const KeyValueFile kv = effective_config(opt);
  std::vector<fs::path> used;
  const auto rows = features_from_trials(opt, kv, used);
  const fs::path csv = opt.out / "features.csv";
  write_text(csv, features_csv(rows));
  RunManifest m{"extract", kv, std::nullopt, path_strings(used), {csv.string()}, 0.0};
  return finish(std::move(m), opt, t0);
}

RunManifest cmd_evaluate(const CommandOptions& opt) {
  const auto t0 = Clock::now();
  require_out(opt);
  const KeyValueFile kv = effective_config(opt);
  EvalConfig cfg;
  cfg.seed = require_seed(kv);
  const std::string kernel = kv.get_string("eval.kernel", "rbf");
  if (kernel == "rbf") cfg.kernel = KernelKind::Rbf;
  else if (kernel == "linear") cfg.kernel = KernelKind::Linear;
  else throw Error(ErrorCode::UsageError, "eval.kernel must be rbf or linear");
  cfg.val_fraction = kv.get_double("eval.val_fraction", cfg.val_fraction);
  cfg.tol = kv.get_double("eval.tol", cfg.tol);
  const long long threads = kv.get_int("eval.threads", 1);
  if (threads < 1) throw Error(ErrorCode::UsageError, "eval.threads must be at least 1");
  cfg.threads = static_cast<std::size_t>(threads);
  if (auto c = kv.get("eval.c_grid")) cfg.grid.c_values = double_list(*c, "eval.c_grid");
  if (auto g = kv.get("eval.gamma_grid")) cfg.grid.gamma_values = double_list(*g, "eval.gamma_grid");

  std::vector<fs::path> used;
  FeatureTable table;
  const bool from_csv = opt.inputs.size() == 1 && fs::is_regular_file(opt.inputs.front()) &&
                        opt.inputs.front().extension() == ".csv";
  if (from_csv) {
    table = read_features_csv(opt.inputs.front());
    used.push_back(opt.inputs.front());
  } else {
    table = FeatureTable::from(features_from_trials(opt, kv, used));
  }

  RunManifest m{"evaluate", kv, cfg.seed, path_strings(used), {}, 0.0};
  const EvalReport report = loso_evaluate(table, cfg);
  const fs::path csv = opt.out / "report.csv";
  const fs::path md = opt.out / "summary.md";
  write_text(csv, report.csv());
  write_text(md, report.summary("LOSO evaluation, " + std::to_string(report.folds.size()) + " folds"));
  m.outputs = {csv.string(), md.string()};
  if (opt.per_channel) {
    const fs::path pc = opt.out / "per_channel.csv";
    write_text(pc, per_channel_csv(per_channel_evaluate(table, cfg)));
    m.outputs.push_back(pc.string());
  }
  return finish(std::move(m), opt, t0);
}

std::string features_csv(const std::vector<TrialFeatures>& rows) {
  if (rows.empty()) throw Error(ErrorCode::EmptyInput, "no feature rows");
  std::ostringstream os;
  os << "subject,label";
  for (const auto& s : rows.front().channel_slices) {
    for (std::size_t j = 0; j < s.length; ++j) os << ',' << s.name << ':' << j;
  }
  os << '\n';
  const std::size_t width = rows.front().vector.size();
  for (const auto& r : rows) {
    if (r.vector.size() != width) throw Error(ErrorCode::ShapeMismatch, "trials have different feature widths");
    if (r.subject_id.find_first_of(",\n") != std::string::npos) {
      throw Error(ErrorCode::InvalidSpec, "subject id '" + r.subject_id + "' cannot be written to CSV");
    }
    os << r.subject_id << ',' << r.label;
    for (double v : r.vector) os << ',' << format_double(v);
    os << '\n';
  }
  return os.str();
}

FeatureTable read_features_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::EmptyInput, path.string() + ": empty file");
  const auto header = split(line, ',');
  if (header.size() < 3 || header[0] != "subject" || header[1] != "label") {
    throw Error(ErrorCode::MalformedHeader, path.string() + ": expected subject,label,<channel>:<j>... columns");
  }
  std::vector<ChannelSlice> slices;
  for (std::size_t c = 2; c < header.size(); ++c) {
    const auto colon = header[c].rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::MalformedHeader, path.string() + ": bad column '" + header[c] + "'");
    const std::string name = header[c].substr(0, colon);
    if (slices.empty() || slices.back().name != name) slices.push_back({name, c - 2, 0});
    ++slices.back().length;
  }
  std::vector<TrialFeatures> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (f.size() != header.size()) throw Error(ErrorCode::ShapeMismatch, where + ": wrong column count");
    TrialFeatures r;
    r.subject_id = f[0];
    r.label = static_cast<int>(to_double(f[1], where));
    r.channel_slices = slices;
    r.vector.reserve(f.size() - 2);
    for (std::size_t c = 2; c < f.size(); ++c) r.vector.push_back(to_double(f[c], where));
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw Error(ErrorCode::EmptyInput, path.string() + ": no rows");
  return FeatureTable::from(rows);
}

}  // namespace singlem::cli
