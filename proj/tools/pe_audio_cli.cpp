// Copyright 2026 The pe-audio Authors. All Rights Reserved.
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

// pe-audio: perceptual-entropy analysis, threshold dumps, gradient checks,
// WAV-pair metrics and the toy regularization demo.
//
// Exit codes: 0 success, 1 check failure, 2 I/O error, 3 configuration error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pe_audio/error.hpp"
#include "pe_audio/metrics.hpp"
#include "pe_audio/pe.hpp"
#include "pe_audio/psychoacoustic.hpp"
#include "pe_audio/signal_io.hpp"
#include "pe_audio/spectral.hpp"
#include "pe_audio/toy_fit.hpp"

namespace {

using nlohmann::json;
using namespace pe_audio;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitIo = 2;
constexpr int kExitConfig = 3;

constexpr const char* kConfigEnv = "PE_AUDIO_CONFIG";

enum class Format { kCsv, kJson };

struct CliConfig {
  int sample_rate = kDefaultSampleRate;
  std::size_t fft_size = kDefaultFftSize;
  std::size_t hop = kDefaultHop;
  std::size_t n_mels = kDefaultMelBins;
  double lambda = kLambdaDefault;
  std::uint64_t seed = 42;
  Format format = Format::kCsv;

  StftConfig stft() const {
    StftConfig cfg;
    cfg.fft_size = fft_size;
    cfg.hop = hop;
    cfg.sample_rate = sample_rate;
    return cfg;
  }
};

// Values given on the command line; unset ones fall back to the config file,
// then to the defaults.
struct Overrides {
  std::optional<int> sample_rate;
  std::optional<std::size_t> fft_size;
  std::optional<std::size_t> hop;
  std::optional<std::size_t> n_mels;
  std::optional<double> lambda;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> format;
  std::optional<std::string> output;
  std::optional<std::string> config;
};

Error ConfigError(const std::string& message) {
  return Error(ErrorKind::kInvalidConfig, message);
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (!in || !(in >> std::ws).eof()) {
    throw ConfigError("bad value for " + key + ": '" + text + "'");
  }
  return value;
}

Format ParseFormat(const std::string& text) {
  if (text == "csv") return Format::kCsv;
  if (text == "json") return Format::kJson;
  throw ConfigError("format must be csv or json, got '" + text + "'");
}

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Flat "key = value" lines; '#' starts a comment.
void ApplyConfigFile(const std::filesystem::path& path, CliConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = Trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '-', '_');
    if (key == "sample_rate") {
      cfg.sample_rate = ParseNumber<int>(key, value);
    } else if (key == "fft_size") {
      cfg.fft_size = ParseNumber<std::size_t>(key, value);
    } else if (key == "hop") {
      cfg.hop = ParseNumber<std::size_t>(key, value);
    } else if (key == "n_mels") {
      cfg.n_mels = ParseNumber<std::size_t>(key, value);
    } else if (key == "lambda") {
      cfg.lambda = ParseNumber<double>(key, value);
    } else if (key == "seed") {
      cfg.seed = ParseNumber<std::uint64_t>(key, value);
    } else if (key == "format") {
      cfg.format = ParseFormat(value);
    } else {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": unknown key '" +
                        key + "'");
    }
  }
}

CliConfig ResolveConfig(const Overrides& o) {
  CliConfig cfg;
  std::optional<std::string> file = o.config;
  if (!file) {
    if (const char* env = std::getenv(kConfigEnv); env != nullptr && *env != '\0') file = env;
  }
  if (file) ApplyConfigFile(*file, cfg);
  if (o.sample_rate) cfg.sample_rate = *o.sample_rate;
  if (o.fft_size) cfg.fft_size = *o.fft_size;
  if (o.hop) cfg.hop = *o.hop;
  if (o.n_mels) cfg.n_mels = *o.n_mels;
  if (o.lambda) cfg.lambda = *o.lambda;
  if (o.seed) cfg.seed = *o.seed;
  if (o.format) cfg.format = ParseFormat(*o.format);

  if (cfg.sample_rate < 8000) {
    throw Error(ErrorKind::kInvalidRate, "sample_rate must be >= 8000");
  }
  cfg.stft().Validate();
  if (cfg.n_mels < 1) throw ConfigError("n_mels must be >= 1");
  LossConfig{cfg.lambda}.Validate();
  return cfg;
}

// Output is assembled in memory and written in one go, so a failure never
// leaves a partial result behind.
void Emit(const std::string& text, const std::optional<std::string>& output) {
  if (!output) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  const std::filesystem::path target(*output);
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    out << text;
    if (!out) throw Error(ErrorKind::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot rename to " + target.string());
}

std::string Number(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::string OptionalNumber(const std::optional<double>& v) { return v ? Number(*v) : ""; }

json OptionalJson(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

AudioBuffer LoadInput(const std::string& path, const CliConfig& cfg) {
  return Resample(LoadWav(path), cfg.sample_rate);
}

// ---------------------------------------------------------------------------

std::string RunAnalyze(const std::string& input, const CliConfig& cfg) {
  const Spectrogram spec = Stft(LoadInput(input, cfg), cfg.stft());
  const PEResult pe = PerceptualEntropy(spec, MaskingModel(MakeBarkLayout(spec.config)));
  if (cfg.format == Format::kJson) {
    json j;
    j["input"] = input;
    j["sample_rate"] = cfg.sample_rate;
    j["frames"] = pe.per_frame.size();
    j["per_frame_pe"] = pe.per_frame;
    j["mean_pe"] = pe.mean_pe;
    j["loss_pe"] = pe.loss_pe;
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  out << "frame,time_s,pe\n";
  const double hop_s = static_cast<double>(cfg.hop) / cfg.sample_rate;
  for (std::size_t t = 0; t < pe.per_frame.size(); ++t) {
    out << t << ',' << Number(t * hop_s) << ',' << Number(pe.per_frame[t]) << '\n';
  }
  out << "# mean_pe," << Number(pe.mean_pe) << "\n# loss_pe," << Number(pe.loss_pe) << '\n';
  return out.str();
}

std::string RunThresholds(const std::string& input, const CliConfig& cfg) {
  const Spectrogram spec = Stft(LoadInput(input, cfg), cfg.stft());
  const MaskingModel model(MakeBarkLayout(spec.config));
  const BarkAnalysis a = Analyze(spec, model);
  const auto centers = model.layout.CenterFrequencies();
  auto row = [](const RealMatrix& m, std::size_t t) {
    const auto r = m.row(static_cast<Eigen::Index>(t));
    return std::vector<double>(r.data(), r.data() + r.size());
  };
  if (cfg.format == Format::kJson) {
    json j;
    j["input"] = input;
    j["center_hz"] = centers;
    j["absolute_threshold"] = model.abs_threshold;
    json frames = json::array();
    for (std::size_t t = 0; t < a.num_frames(); ++t) {
      frames.push_back({{"frame", t},
                        {"band_power", row(a.band_power, t)},
                        {"alpha", row(a.alpha, t)},
                        {"threshold", row(a.threshold, t)}});
    }
    j["frames"] = std::move(frames);
    return j.dump(2) + "\n";
  }
  // Long format: three rows per frame (B, alpha, T'), one column per band.
  std::ostringstream out;
  out << "frame,quantity";
  for (double c : centers) out << ',' << Number(c);
  out << '\n';
  auto put = [&](std::size_t t, const char* name, const RealMatrix& m) {
    out << t << ',' << name;
    for (std::size_t i = 0; i < model.n(); ++i) {
      out << ',' << Number(m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)));
    }
    out << '\n';
  };
  for (std::size_t t = 0; t < a.num_frames(); ++t) {
    put(t, "B", a.band_power);
    put(t, "alpha", a.alpha);
    put(t, "T", a.threshold);
  }
  return out.str();
}

struct CheckOutput {
  std::string text;
  bool pass = false;
};

CheckOutput RunGradCheck(const std::string& input, const CliConfig& cfg, std::size_t n_coords) {
  if (n_coords < 1) throw ConfigError("n_coords must be >= 1");
  const Spectrogram spec = Stft(LoadInput(input, cfg), cfg.stft());
  const MaskingModel model(MakeBarkLayout(spec.config));
  GradientReport report = PeGradient(spec, model);
  const FdCheckResult check = CheckPeGradient(spec, model, report, n_coords, cfg.seed);
  report.max_rel_err_vs_fd = check.max_rel_err;
  constexpr double kTolerance = 1e-4;
  CheckOutput result;
  result.pass = check.max_rel_err < kTolerance;

  auto coord_json = [](const FdCoordinate& c) {
    return json{{"frame", c.frame},       {"bin", c.bin},
                {"part", c.imag ? "im" : "re"}, {"value", c.value},
                {"analytic", c.analytic}, {"numeric", c.numeric},
                {"rel_err", c.rel_err}};
  };
  if (cfg.format == Format::kJson) {
    json j;
    j["input"] = input;
    j["per_frame_pe"] = report.per_frame_pe;
    j["mean_pe"] = report.mean_pe;
    j["loss_pe"] = report.loss_pe;
    j["max_rel_err_vs_fd"] = *report.max_rel_err_vs_fd;
    j["tolerance"] = kTolerance;
    j["coords_requested"] = n_coords;
    j["coords_checked"] = check.coords.size();
    j["worst"] = check.worst ? coord_json(*check.worst) : json(nullptr);
    j["note"] = check.all_kink ? json("all-kink: no differentiable coordinate; vacuous pass")
                               : json(nullptr);
    j["pass"] = result.pass;
    result.text = j.dump(2) + "\n";
    return result;
  }
  std::ostringstream out;
  out << "frame,bin,part,value,analytic,numeric,rel_err\n";
  for (const auto& c : check.coords) {
    out << c.frame << ',' << c.bin << ',' << (c.imag ? "im" : "re") << ',' << Number(c.value)
        << ',' << Number(c.analytic) << ',' << Number(c.numeric) << ',' << Number(c.rel_err)
        << '\n';
  }
  out << "# max_rel_err_vs_fd," << Number(check.max_rel_err) << '\n';
  if (check.all_kink) out << "# note,all-kink\n";
  result.text = out.str();
  return result;
}

struct PairRow {
  std::string ref;
  std::string pred;
  MetricReport report;
};

std::vector<std::pair<std::string, std::string>> ReadManifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kFileNotFound, "manifest " + path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = Trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::string ref, pred, extra;
    if (!(fields >> ref >> pred) || (fields >> extra)) {
      throw ConfigError("manifest line " + std::to_string(line_no) + ": expected two columns");
    }
    // Relative paths are resolved against the manifest's directory.
    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path fp(p);
      return (fp.is_relative() ? base / fp : fp).string();
    };
    pairs.emplace_back(resolve(ref), resolve(pred));
  }
  if (pairs.empty()) throw ConfigError("manifest " + path + " lists no pairs");
  return pairs;
}

std::string RunCompare(const std::vector<std::pair<std::string, std::string>>& pairs,
                       bool batch, const CliConfig& cfg) {
  CompareOptions opt;
  opt.stft = cfg.stft();
  opt.n_mels = cfg.n_mels;
  opt.n_coeffs = std::min(kDefaultCepstralCoeffs, cfg.n_mels);

  // Every file is read before any work starts, so a missing one aborts the
  // whole batch without output.
  std::vector<std::pair<AudioBuffer, AudioBuffer>> audio;
  for (const auto& [ref, pred] : pairs) audio.emplace_back(LoadWav(ref), LoadWav(pred));

  std::vector<std::future<MetricReport>> pending;
  for (const auto& [ref, pred] : audio) {
    pending.push_back(std::async(std::launch::async,
                                 [&ref, &pred, &opt] { return CompareBuffers(ref, pred, opt); }));
  }
  std::vector<PairRow> rows;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    rows.push_back({pairs[i].first, pairs[i].second, pending[i].get()});
  }
  for (const auto& r : rows) {
    for (const auto& w : r.report.warnings) std::cerr << r.ref << ": " << w << '\n';
  }

  // Means over the rows where each metric is defined.
  auto mean_of = [&](auto get) -> std::optional<double> {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : rows) {
      const std::optional<double> v = get(r.report);
      if (v) sum += *v, ++count;
    }
    return count == 0 ? std::nullopt : std::optional<double>(sum / count);
  };
  MetricReport mean;
  mean.mcd_db = *mean_of([](const MetricReport& m) { return std::optional<double>(m.mcd_db); });
  mean.f0_rmse_hz = mean_of([](const MetricReport& m) { return m.f0_rmse_hz; });
  mean.vuv_error_pct =
      *mean_of([](const MetricReport& m) { return std::optional<double>(m.vuv_error_pct); });
  mean.f0_corr = mean_of([](const MetricReport& m) { return m.f0_corr; });
  std::size_t frames = 0;
  for (const auto& r : rows) frames += r.report.frames_compared;
  mean.frames_compared = frames;

  auto report_json = [](const MetricReport& m) {
    return json{{"mcd_db", m.mcd_db},
                {"f0_rmse_hz", OptionalJson(m.f0_rmse_hz)},
                {"vuv_error_pct", m.vuv_error_pct},
                {"f0_corr", OptionalJson(m.f0_corr)},
                {"frames_compared", m.frames_compared},
                {"warnings", m.warnings}};
  };
  if (cfg.format == Format::kJson) {
    if (!batch) {
      json j = report_json(rows.front().report);
      j["ref"] = rows.front().ref;
      j["pred"] = rows.front().pred;
      return j.dump(2) + "\n";
    }
    json j;
    j["rows"] = json::array();
    for (const auto& r : rows) {
      json row = report_json(r.report);
      row["ref"] = r.ref;
      row["pred"] = r.pred;
      j["rows"].push_back(std::move(row));
    }
    j["mean"] = report_json(mean);
    j["mean"]["frames_compared"] = frames;
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  out << "ref,pred,mcd_db,f0_rmse_hz,vuv_error_pct,f0_corr,frames_compared\n";
  auto put = [&](const std::string& ref, const std::string& pred, const MetricReport& m) {
    out << ref << ',' << pred << ',' << Number(m.mcd_db) << ',' << OptionalNumber(m.f0_rmse_hz)
        << ',' << Number(m.vuv_error_pct) << ',' << OptionalNumber(m.f0_corr) << ','
        << m.frames_compared << '\n';
  };
  for (const auto& r : rows) put(r.ref, r.pred, r.report);
  if (batch) put("mean", "", mean);
  return out.str();
}

std::string RunToyFit(const std::string& input, const CliConfig& cfg, std::size_t steps,
                      std::optional<double> lr) {
  const AudioBuffer target = LoadInput(input, cfg);
  FitOptions opt;
  opt.steps = steps;
  opt.seed = cfg.seed;
  opt.n_mels = cfg.n_mels;
  if (lr) opt.learning_rate = *lr;
  FitOptions regularized = opt;
  regularized.loss.lambda = cfg.lambda;
  FitOptions baseline = opt;
  baseline.loss.lambda = 0.0;

  auto pending = std::async(std::launch::async,
                            [&] { return ToyFit(target, cfg.stft(), baseline); });
  const FitRecord reg = ToyFit(target, cfg.stft(), regularized);
  const FitRecord base = pending.get();

  std::cerr << "final mean PE: lambda=" << Number(reg.lambda) << " -> "
            << Number(reg.final_point().mean_pe) << ", lambda=0 -> "
            << Number(base.final_point().mean_pe) << '\n';

  if (cfg.format == Format::kJson) {
    auto arm = [](const FitRecord& r) {
      json curve = json::array();
      for (std::size_t s = 0; s < r.curve.size(); ++s) {
        const auto& p = r.curve[s];
        curve.push_back({{"step", s},
                         {"l_sing", p.l_sing},
                         {"loss_pe", p.l_pe},
                         {"mean_pe", p.mean_pe},
                         {"total", p.total}});
      }
      const auto& f = r.final_point();
      return json{{"lambda", r.lambda},
                  {"curve", std::move(curve)},
                  {"final", {{"l_sing", f.l_sing},
                             {"loss_pe", f.l_pe},
                             {"mean_pe", f.mean_pe},
                             {"total", f.total}}}};
    };
    json j;
    j["input"] = input;
    j["steps"] = steps;
    j["learning_rate"] = opt.learning_rate;
    j["seed"] = cfg.seed;
    j["regularized"] = arm(reg);
    j["unregularized"] = arm(base);
    j["mean_pe"] = reg.final_point().mean_pe;
    j["loss_pe"] = reg.final_point().l_pe;
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  out << "step,l_sing_reg,mean_pe_reg,total_reg,l_sing_base,mean_pe_base,total_base\n";
  for (std::size_t s = 0; s < reg.curve.size(); ++s) {
    const auto& a = reg.curve[s];
    const auto& b = base.curve[s];
    out << s << ',' << Number(a.l_sing) << ',' << Number(a.mean_pe) << ',' << Number(a.total)
        << ',' << Number(b.l_sing) << ',' << Number(b.mean_pe) << ',' << Number(b.total) << '\n';
  }
  return out.str();
}

int ExitCodeFor(const Error& e) {
  if (e.is_io() || e.kind() == ErrorKind::kBufferTooShort) return kExitIo;
  if (e.kind() == ErrorKind::kInvalidConfig || e.kind() == ErrorKind::kInvalidRate) {
    return kExitConfig;
  }
  return kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perceptual entropy analysis for singing-voice spectra"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--sample-rate", o.sample_rate, "Analysis rate in Hz; input is resampled (22050)");
  app.add_option("--fft-size", o.fft_size, "FFT length, a power of two (1024)");
  app.add_option("--hop", o.hop, "Hop in samples (661)");
  app.add_option("--n-mels", o.n_mels, "Mel bands for metrics and toy-fit (80)");
  app.add_option("--lambda", o.lambda, "PE loss weight (0.01)");
  app.add_option("--seed", o.seed, "Seed for every random choice (42)");
  app.add_option("--format", o.format, "Output format: csv or json (csv)");
  app.add_option("--output", o.output, "Write output here instead of stdout");
  app.add_option("--config", o.config,
                 std::string("Flat key = value config file; default from $") + kConfigEnv);

  std::string input, ref, pred, manifest;
  std::size_t n_coords = 100;
  std::size_t steps = 200;
  std::optional<double> lr;

  auto* analyze = app.add_subcommand("analyze", "Per-frame perceptual entropy of a WAV");
  analyze->add_option("input", input, "WAV file")->required();
  auto* thresholds =
      app.add_subcommand("thresholds", "Band power, tonality and masking threshold per frame");
  thresholds->add_option("input", input, "WAV file")->required();
  auto* grad = app.add_subcommand("grad-check", "Compare the PE gradient with finite differences");
  grad->add_option("input", input, "WAV file")->required();
  grad->add_option("--n-coords", n_coords, "Coordinates to check (100)");
  auto* compare = app.add_subcommand("compare", "MCD and F0 metrics for WAV pairs");
  compare->add_option("ref", ref, "Reference WAV");
  compare->add_option("pred", pred, "Synthesized WAV");
  compare->add_option("--manifest", manifest, "Two-column file of ref/pred pairs");
  auto* toy = app.add_subcommand("toy-fit", "Fit a spectrogram with and without the PE term");
  toy->add_option("input", input, "Target WAV")->required();
  toy->add_option("--steps", steps, "Gradient steps (200)");
  toy->add_option("--lr", lr, "Learning rate");
  for (auto* sub : {analyze, thresholds, grad, compare, toy}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    const CliConfig cfg = ResolveConfig(o);
    int code = kExitOk;
    std::string text;
    if (*analyze) {
      text = RunAnalyze(input, cfg);
    } else if (*thresholds) {
      text = RunThresholds(input, cfg);
    } else if (*grad) {
      CheckOutput r = RunGradCheck(input, cfg, n_coords);
      text = std::move(r.text);
      if (!r.pass) {
        std::cerr << "gradient check failed: max relative error >= 1e-4\n";
        code = kExitCheckFailed;
      }
    } else if (*compare) {
      const bool batch = !manifest.empty();
      if (batch == (!ref.empty() || !pred.empty()) || (!batch && (ref.empty() || pred.empty()))) {
        throw ConfigError("give either REF PRED or --manifest FILE");
      }
      text = RunCompare(batch ? ReadManifest(manifest)
                              : std::vector<std::pair<std::string, std::string>>{{ref, pred}},
                        batch, cfg);
    } else if (*toy) {
      if (steps < 1) throw ConfigError("steps must be >= 1");
      text = RunToyFit(input, cfg, steps, lr);
    }
    Emit(text, o.output);
    return code;
  } catch (const Error& e) {
    std::cerr << "pe-audio: " << e.what() << '\n';
    return ExitCodeFor(e);
  } catch (const std::exception& e) {
    std::cerr << "pe-audio: " << e.what() << '\n';
    return kExitIo;
  }
}
