#ifndef NECPD_PIPELINE_HPP
#define NECPD_PIPELINE_HPP

// End-to-end pipeline: synthetic generators, event file formats, streaming
// detection/localization and the bootstrap evaluation harness.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "necpd/anomaly.hpp"
#include "necpd/error.hpp"
#include "necpd/features.hpp"
#include "necpd/io.hpp"
#include "necpd/random.hpp"
#include "necpd/solvers.hpp"
#include "necpd/tensor.hpp"

namespace necpd {

// ---------------------------------------------------------------------------
// Configuration

struct PipelineConfig {
  // tensor / solver
  Dims dims{20, 6, 2000};
  std::size_t rank = 3;
  std::string method = "necpd";  // als | sgd | psgd | necpd
  double eta0 = 1.0;
  double gamma = 0.5;
  double beta = 0.0;
  double noise_sigma = 1e-3;
  std::size_t max_epochs = 1;
  double tol = 1e-8;
  bool lookahead = false;
  bool refresh_temporal_row = true;
  std::size_t trace_every = 20;
  bool record_wall_time = false;
  std::size_t restarts = 1;
  double noise_std = 0.0;  // additive noise of synth-cp

  // detection / localization / evaluation
  double nu = 0.05;
  double sigma = 0.0;  // kernel bandwidth; 0 selects the median heuristic
  std::size_t k = 2;
  double bootstrap_fraction = 0.8;
  std::size_t trials = 10;
  // initial state of the training fit in run_stream: spectral | uniform
  std::string train_init = "spectral";

  // features
  std::size_t n_freq = 600;
  bool diff_adjacent = false;

  // synthetic SHM events
  std::size_t n_healthy = 125;
  std::vector<std::size_t> n_damage{107, 30};
  std::vector<double> severity{1.0, 2.0};
  std::size_t locations = 24;
  std::size_t damage_location = 9;
  double sample_rate_hz = 600.0;
  std::size_t samples = 1200;
  double jitter = 0.2;
  double signal_noise = 0.05;

  // misc
  std::uint64_t seed = 0;
  std::size_t rmax = 5;
  double target_rmse = 0.1;
  std::string input;
  std::string output = "out";

  SolverConfig solver() const {
    SolverConfig c;
    c.rank = rank;
    c.eta0 = eta0;
    c.gamma = gamma;
    c.beta = beta;
    c.noise_sigma = noise_sigma;
    c.max_epochs = max_epochs;
    c.tol = tol;
    c.seed = seed;
    c.lookahead = lookahead;
    c.refresh_temporal_row = refresh_temporal_row;
    c.trace_every = trace_every;
    c.record_wall_time = record_wall_time;
    return c;
  }

  void validate() const {
    if (!(bootstrap_fraction > 0.0 && bootstrap_fraction < 1.0)) {
      throw InvalidInput("bootstrap_fraction must lie in (0, 1)");
    }
    if (trials == 0) throw InvalidInput("trials must be at least 1");
    if (n_damage.size() != severity.size()) {
      throw InvalidInput("n_damage and severity need the same number of entries");
    }
    if (!(nu > 0.0 && nu < 1.0)) throw InvalidInput("nu must lie in (0, 1)");
    if (sigma < 0.0) throw InvalidInput("sigma must be nonnegative");
    if (train_init != "spectral" && train_init != "uniform") {
      throw InvalidInput("unknown train_init '" + train_init + "'");
    }
    if (method != "als" && method != "sgd" && method != "psgd" && method != "necpd") {
      throw InvalidInput("unknown method '" + method + "'");
    }
    solver().validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw InvalidInput("config key '" + key + "' expects a nonnegative integer, got '" + v + "'");
  }
  if (used != v.size()) throw InvalidInput("config key '" + key + "' expects an integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    return io::parse_double(v);
  } catch (const InvalidInput&) {
    throw InvalidInput("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidInput("config key '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace detail

/// Every key accepted in config files (and as --key flags on the CLI).
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "dims", "rank", "method", "eta0", "gamma", "beta", "noise_sigma", "max_epochs", "tol",
      "lookahead", "refresh_temporal_row", "trace_every", "record_wall_time", "restarts",
      "noise_std", "nu", "sigma", "k", "bootstrap_fraction", "trials", "train_init",
      "n_freq", "diff_adjacent",
      "n_healthy", "n_damage", "severity", "locations", "damage_location", "sample_rate_hz",
      "samples", "jitter", "signal_noise", "seed", "rmax", "target_rmse", "input", "output"};
  return keys;
}

inline void set_config_value(PipelineConfig& c, const std::string& key, const std::string& raw) {
  using namespace detail;
  const std::string v = trim(raw);
  auto counts = [&](const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& it : split_list(s)) out.push_back(parse_count(key, it));
    return out;
  };
  if (key == "dims") {
    c.dims = counts(v);
    if (c.dims.size() < 2) throw InvalidInput("dims needs at least two extents");
  } else if (key == "rank") c.rank = parse_count(key, v);
  else if (key == "method") c.method = v;
  else if (key == "eta0") c.eta0 = parse_real(key, v);
  else if (key == "gamma") c.gamma = parse_real(key, v);
  else if (key == "beta") c.beta = parse_real(key, v);
  else if (key == "noise_sigma") c.noise_sigma = parse_real(key, v);
  else if (key == "max_epochs") c.max_epochs = parse_count(key, v);
  else if (key == "tol") c.tol = parse_real(key, v);
  else if (key == "lookahead") c.lookahead = parse_bool(key, v);
  else if (key == "refresh_temporal_row") c.refresh_temporal_row = parse_bool(key, v);
  else if (key == "trace_every") c.trace_every = parse_count(key, v);
  else if (key == "record_wall_time") c.record_wall_time = parse_bool(key, v);
  else if (key == "restarts") c.restarts = parse_count(key, v);
  else if (key == "noise_std") c.noise_std = parse_real(key, v);
  else if (key == "nu") c.nu = parse_real(key, v);
  else if (key == "sigma") c.sigma = parse_real(key, v);
  else if (key == "k") c.k = parse_count(key, v);
  else if (key == "bootstrap_fraction") c.bootstrap_fraction = parse_real(key, v);
  else if (key == "trials") c.trials = parse_count(key, v);
  else if (key == "train_init") c.train_init = v;
  else if (key == "n_freq") c.n_freq = parse_count(key, v);
  else if (key == "diff_adjacent") c.diff_adjacent = parse_bool(key, v);
  else if (key == "n_healthy") c.n_healthy = parse_count(key, v);
  else if (key == "n_damage") c.n_damage = counts(v);
  else if (key == "severity") {
    c.severity.clear();
    for (const auto& it : split_list(v)) c.severity.push_back(parse_real(key, it));
  } else if (key == "locations") c.locations = parse_count(key, v);
  else if (key == "damage_location") c.damage_location = parse_count(key, v);
  else if (key == "sample_rate_hz") c.sample_rate_hz = parse_real(key, v);
  else if (key == "samples") c.samples = parse_count(key, v);
  else if (key == "jitter") c.jitter = parse_real(key, v);
  else if (key == "signal_noise") c.signal_noise = parse_real(key, v);
  else if (key == "seed") c.seed = parse_count(key, v);
  else if (key == "rmax") c.rmax = parse_count(key, v);
  else if (key == "target_rmse") c.target_rmse = parse_real(key, v);
  else if (key == "input") c.input = v;
  else if (key == "output") c.output = v;
  else throw InvalidInput("unknown config key '" + key + "'");
}

/// Parses `key = value` lines; blank lines and lines starting with '#' are
/// ignored. Later keys override earlier ones.
inline void apply_config(PipelineConfig& c, std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw InvalidInput("config line " + std::to_string(lineno) + " is not 'key = value'");
    }
    set_config_value(c, detail::trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot open config " + path);
  PipelineConfig c;
  apply_config(c, is);
  return c;
}

// ---------------------------------------------------------------------------
// Synthetic CP data

struct SyntheticCp {
  DenseTensor tensor;
  KruskalModel truth;
};

/// Factors i.i.d. U[0,1] (one matrix per mode), tensor = reconstruction plus
/// optional N(0, noise_std^2) noise.
inline SyntheticCp synth_cp(const Dims& dims, std::size_t rank, double noise_std, std::uint64_t seed) {
  if (rank == 0) throw InvalidInput("rank must be positive");
  if (noise_std < 0.0) throw InvalidInput("noise_std must be nonnegative");
  Rng rng(seed);
  std::vector<Matrix> factors;
  for (std::size_t d : dims) {
    factors.push_back(uniform_matrix(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(rank), rng));
  }
  KruskalModel truth(std::move(factors));
  DenseTensor x = reconstruct(truth, dims);
  if (noise_std > 0.0) {
    std::normal_distribution<double> g(0.0, noise_std);
    for (auto& v : x.values()) v += g(rng);
  }
  return {std::move(x), std::move(truth)};
}

// ---------------------------------------------------------------------------
// Synthetic SHM events

struct ShmSpec {
  std::size_t n_healthy = 125;
  std::vector<std::size_t> n_damage{107, 30};
  std::vector<double> severity{1.0, 2.0};
  std::size_t locations = 24;
  std::size_t damage_location = 9;
  std::size_t samples = 1200;
  double sample_rate_hz = 600.0;
  double jitter = 0.2;         // relative event-to-event excitation variation
  double signal_noise = 0.05;  // additive white noise std
  std::uint64_t seed = 0;

  static ShmSpec from(const PipelineConfig& c) {
    ShmSpec s;
    s.n_healthy = c.n_healthy;
    s.n_damage = c.n_damage;
    s.severity = c.severity;
    s.locations = c.locations;
    s.damage_location = c.damage_location;
    s.samples = c.samples;
    s.sample_rate_hz = c.sample_rate_hz;
    s.jitter = c.jitter;
    s.signal_noise = c.signal_noise;
    s.seed = c.seed;
    return s;
  }
};

inline constexpr std::size_t kShmModes = 4;

/// Per-mode relative change of the damaged location's modal amplitude per
/// unit of severity.
inline constexpr std::array<double, kShmModes> kDamagePattern{-0.5, 0.5, -0.5, 0.5};
inline constexpr double kShapeVariation = 0.02;
/// Fraction of kDamagePattern applied to the global modal amplitudes.
inline constexpr double kGlobalDamage = 0.8;

/// Synthetic structural events. Every sensor records a sum of kShmModes
/// modal sinusoids whose amplitudes are the product of an event excitation
/// (jittered around a fixed level) and a smooth location mode shape, plus
/// white noise. A damage event of severity s rescales the mode shape at the
/// damaged location by (1 + s * kDamagePattern[r]) and the excitation of
/// every location by (1 + s * kGlobalDamage * kDamagePattern[r]), both
/// clamped at zero. Events are emitted healthy first, then
/// each damage class in order, labelled "healthy", "damage1", "damage2", ...
inline std::vector<EventRecord> synth_shm(const ShmSpec& spec) {
  if (spec.locations < 2) throw InvalidInput("synth_shm needs at least 2 locations");
  if (spec.damage_location >= spec.locations) throw InvalidInput("damage_location must be < locations");
  if (spec.n_damage.size() != spec.severity.size()) {
    throw InvalidInput("n_damage and severity need the same number of entries");
  }
  if (spec.samples < 4 * (kShmModes + 2)) throw InvalidInput("too few samples per event");
  const auto L = static_cast<Eigen::Index>(spec.locations);
  const auto N = static_cast<Eigen::Index>(spec.samples);
  const double pi = std::numbers::pi;

  // Modal frequency bins spread across the lower half of the spectrum.
  std::array<double, kShmModes> bins{};
  for (std::size_t r = 0; r < kShmModes; ++r) {
    bins[r] = std::floor(static_cast<double>(spec.samples / 2) * static_cast<double>(r + 1) /
                         static_cast<double>(kShmModes + 2));
  }
  const std::array<double, kShmModes> level{1.0, 0.8, 0.6, 0.4};
  Matrix shape(L, static_cast<Eigen::Index>(kShmModes));
  for (Eigen::Index l = 0; l < L; ++l) {
    for (std::size_t r = 0; r < kShmModes; ++r) {
      shape(l, static_cast<Eigen::Index>(r)) =
          1.0 + kShapeVariation * std::sin(pi * static_cast<double>(r + 1) * (static_cast<double>(l) + 0.5) /
                               static_cast<double>(L));
    }
  }

  Rng rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * pi);

  auto make_event = [&](const std::string& id, const std::string& label, double severity) {
    Matrix s = shape;
    if (severity != 0.0) {
      const auto d = static_cast<Eigen::Index>(spec.damage_location);
      for (std::size_t r = 0; r < kShmModes; ++r) {
        const auto rr = static_cast<Eigen::Index>(r);
        const double change = severity * kDamagePattern[r];
        s(d, rr) *= std::max(0.0, 1.0 + change);
      }
    }
    std::array<double, kShmModes> amp{};
    for (std::size_t r = 0; r < kShmModes; ++r) {
      amp[r] = level[r] * (1.0 + spec.jitter * gauss(rng)) *
               std::max(0.0, 1.0 + severity * kGlobalDamage * kDamagePattern[r]);
    }
    EventRecord e;
    e.id = id;
    e.label = label;
    e.sample_rate_hz = spec.sample_rate_hz;
    e.signals.resize(N, L);
    for (Eigen::Index l = 0; l < L; ++l) {
      std::array<double, kShmModes> ph{};
      for (auto& p : ph) p = phase(rng);
      for (Eigen::Index t = 0; t < N; ++t) {
        double v = 0.0;
        for (std::size_t r = 0; r < kShmModes; ++r) {
          v += amp[r] * s(l, static_cast<Eigen::Index>(r)) *
               std::sin(2.0 * pi * bins[r] * static_cast<double>(t) / static_cast<double>(N) + ph[r]);
        }
        e.signals(t, l) = v + spec.signal_noise * gauss(rng);
      }
    }
    return e;
  };

  std::vector<EventRecord> events;
  std::size_t counter = 0;
  auto next_id = [&] {
    std::ostringstream ss;
    ss << "e" << std::setw(4) << std::setfill('0') << counter++;
    return ss.str();
  };
  for (std::size_t i = 0; i < spec.n_healthy; ++i) events.push_back(make_event(next_id(), "healthy", 0.0));
  for (std::size_t c = 0; c < spec.n_damage.size(); ++c) {
    for (std::size_t i = 0; i < spec.n_damage[c]; ++i) {
      events.push_back(make_event(next_id(), "damage" + std::to_string(c + 1), spec.severity[c]));
    }
  }
  return events;
}

// ---------------------------------------------------------------------------
// Event files: one CSV per event (sensor_id,sample_index,value) and a
// manifest CSV (event_id,path,label,sample_rate_hz). Manifest paths are
// relative to the manifest's directory.

inline void write_event_csv(std::ostream& os, const EventRecord& e) {
  os << "sensor_id,sample_index,value\n";
  for (Eigen::Index s = 0; s < e.signals.cols(); ++s) {
    for (Eigen::Index t = 0; t < e.signals.rows(); ++t) {
      os << s << ',' << t << ',' << io::format_double(e.signals(t, s)) << '\n';
    }
  }
}

inline Matrix read_event_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) ||
      io::split_csv_line(line) != std::vector<std::string>{"sensor_id", "sample_index", "value"}) {
    throw InvalidInput("event CSV header must be sensor_id,sample_index,value");
  }
  std::map<std::size_t, std::map<std::size_t, double>> data;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = io::split_csv_line(line);
    if (cells.size() != 3) throw InvalidInput("event CSV rows need 3 cells");
    const auto sensor = detail::parse_count("sensor_id", cells[0]);
    const auto index = detail::parse_count("sample_index", cells[1]);
    if (!data[sensor].emplace(index, io::parse_double(cells[2])).second) {
      throw InvalidInput("duplicate sample in event CSV");
    }
  }
  if (data.empty()) throw InvalidInput("event CSV has no samples");
  const std::size_t S = data.size();
  const std::size_t T = data.begin()->second.size();
  Matrix m(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(S));
  std::size_t col = 0;
  for (const auto& [sensor, samples] : data) {
    if (sensor != col) throw InvalidInput("sensor ids must be 0..S-1");
    if (samples.size() != T) throw InvalidInput("all sensors in an event must share a sample count");
    std::size_t row = 0;
    for (const auto& [idx, v] : samples) {
      if (idx != row) throw InvalidInput("sample indices must be 0..T-1");
      m(static_cast<Eigen::Index>(row++), static_cast<Eigen::Index>(col)) = v;
    }
    ++col;
  }
  return m;
}

inline void save_events(const std::string& dir, const std::vector<EventRecord>& events) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "events");
  std::ofstream manifest(fs::path(dir) / "manifest.csv");
  if (!manifest) throw InvalidInput("cannot write manifest in " + dir);
  manifest << "event_id,path,label,sample_rate_hz\n";
  for (const auto& e : events) {
    const std::string rel = "events/" + e.id + ".csv";
    std::ofstream os(fs::path(dir) / rel);
    if (!os) throw InvalidInput("cannot write " + rel);
    write_event_csv(os, e);
    manifest << e.id << ',' << rel << ',' << e.label << ',' << io::format_double(e.sample_rate_hz) << '\n';
  }
}

inline std::vector<EventRecord> load_events(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream is(manifest_path);
  if (!is) throw InvalidInput("cannot open manifest " + manifest_path);
  std::string line;
  if (!std::getline(is, line) ||
      io::split_csv_line(line) != std::vector<std::string>{"event_id", "path", "label", "sample_rate_hz"}) {
    throw InvalidInput("manifest header must be event_id,path,label,sample_rate_hz");
  }
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<EventRecord> events;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = io::split_csv_line(line);
    if (cells.size() != 4) throw InvalidInput("manifest rows need 4 cells");
    EventRecord e;
    e.id = cells[0];
    e.label = cells[2];
    e.sample_rate_hz = io::parse_double(cells[3]);
    std::ifstream es(base / cells[1]);
    if (!es) throw InvalidInput("cannot open event file " + cells[1]);
    e.signals = read_event_csv(es);
    events.push_back(std::move(e));
  }
  return events;
}

// ---------------------------------------------------------------------------
// Streaming detection and localization

inline std::vector<Matrix> event_features(const std::vector<EventRecord>& events,
                                          const FeatureOptions& opt) {
  std::vector<Matrix> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(extract_features(e, opt).values);
  return out;
}

/// (features, locations, events) tensor from equally shaped feature slices.
inline DenseTensor stack_features(const std::vector<Matrix>& slices) {
  std::vector<DenseTensor> s;
  s.reserve(slices.size());
  for (const auto& m : slices) s.push_back(matrix_as_slice(m));
  return stack_last_mode(std::span<const DenseTensor>(s));
}

struct StreamResult {
  ConvergenceTrace trace;        // training fit
  AnomalyModel detector;
  Vector decision_values;        // one per streamed event
  Matrix localization;           // streamed events x locations
  SolverState state;             // after the last streamed event
};

/// Fits the initial model to the training slices, re-solves their temporal
/// rows against the final factors, builds the one-class detector on those
/// rows, then streams each remaining slice through online_update and scores
/// it.
inline StreamResult run_stream(const PipelineConfig& cfg, const std::vector<Matrix>& train,
                               const std::vector<Matrix>& stream) {
  cfg.validate();
  if (train.size() < 2) throw InvalidInput("run_stream needs at least 2 training events");
  const SolverConfig sc = cfg.solver();
  const DenseTensor x = stack_features(train);
  FitResult fit = [&] {
    try {
      SolverState init = cfg.train_init == "spectral" ? spectral_init_state(x, sc) : init_state(x.dims(), sc);
      return stochastic_fit(x, sc, Method::necpd, SampleOrder::shuffled, std::move(init));
    } catch (const Divergence& d) {
      throw Divergence(d.mode(), std::string("training fit: ") + d.what());
    }
  }();

  // Training rows are re-solved against the final factors so that they are
  // on the same footing as the least-squares rows of streamed events.
  for (std::size_t k = 0; k < train.size(); ++k) {
    fit.state.model.factor(2).row(static_cast<Eigen::Index>(k)) =
        temporal_row_least_squares(fit.state.model, last_mode_slice(x, k)).transpose();
  }

  StreamResult out;
  out.trace = std::move(fit.trace);
  out.detector = fit_one_class(fit.state.model.factor(2), cfg.nu,
                               cfg.sigma > 0.0 ? std::optional<double>(cfg.sigma) : std::nullopt);
  SolverState state = std::move(fit.state);
  const auto L = static_cast<Eigen::Index>(state.model.factor(1).rows());
  out.decision_values.resize(static_cast<Eigen::Index>(stream.size()));
  out.localization.resize(static_cast<Eigen::Index>(stream.size()), L);
  for (std::size_t e = 0; e < stream.size(); ++e) {
    try {
      state = online_update(std::move(state), stream[e], sc);
      const Matrix& c = state.model.factor(2);
      out.decision_values(static_cast<Eigen::Index>(e)) = decision_values(out.detector, c.bottomRows(1))(0);
      out.localization.row(static_cast<Eigen::Index>(e)) = knn_scores(state.model.factor(1), cfg.k).transpose();
    } catch (const Divergence& d) {
      throw Divergence(d.mode(), "event " + std::to_string(e) + ": " + d.what());
    } catch (const InvalidShape& ex) {
      throw InvalidShape("event " + std::to_string(e) + ": " + ex.what());
    } catch (const InvalidInput& ex) {
      throw InvalidInput("event " + std::to_string(e) + ": " + ex.what());
    }
  }
  out.state = std::move(state);
  return out;
}

struct BootstrapSplit {
  std::vector<std::size_t> train;  // healthy event indices
  std::vector<std::size_t> test;   // held-out healthy and all damage, in input order
};

/// Seeded split: a random `fraction` of the healthy events (rounded) trains,
/// everything else tests.
inline BootstrapSplit bootstrap_split(const std::vector<EventRecord>& events, double fraction,
                                      std::uint64_t seed) {
  std::vector<std::size_t> healthy;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].healthy()) healthy.push_back(i);
  }
  Rng rng(seed);
  const auto perm = sample_order(healthy.size(), SampleOrder::shuffled, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(healthy.size())));
  std::set<std::size_t> train;
  for (std::size_t i = 0; i < n_train; ++i) train.insert(healthy[perm[i]]);
  BootstrapSplit s;
  s.train.assign(train.begin(), train.end());
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (!train.count(i)) s.test.push_back(i);
  }
  return s;
}

struct TrialOutcome {
  FScore score;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::vector<std::size_t> test;  // streamed event indices, in order
  Vector decision_values;
};

/// Damage is the positive class; an event is flagged when its decision
/// value is negative.
inline TrialOutcome score_detection(const std::vector<EventRecord>& events,
                                    const std::vector<std::size_t>& test, const Vector& dv) {
  TrialOutcome o;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const bool flagged = dv(static_cast<Eigen::Index>(i)) < 0.0;
    const bool damage = !events[test[i]].healthy();
    if (flagged && damage) ++o.tp;
    else if (flagged) ++o.fp;
    else if (damage) ++o.fn;
    else ++o.tn;
  }
  o.score = fscore(o.tp, o.fp, o.fn);
  o.test = test;
  o.decision_values = dv;
  return o;
}

struct BootstrapResult {
  EvalReport report;
  std::vector<TrialOutcome> outcomes;
};

/// Repeated seeded 80/20 (by default) healthy splits: train on the healthy
/// part, stream held-out healthy plus all damage events, F-score per trial.
inline BootstrapResult evaluate_bootstrap(const PipelineConfig& cfg, const std::vector<EventRecord>& events) {
  cfg.validate();
  const auto n_healthy = static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [](const EventRecord& e) { return e.healthy(); }));
  if (n_healthy < 10) throw InvalidInput("bootstrap evaluation needs at least 10 healthy events");
  const FeatureOptions fo{cfg.n_freq, cfg.diff_adjacent};
  const std::vector<Matrix> slices = event_features(events, fo);

  BootstrapResult out;
  std::vector<FScore> scores;
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    const std::uint64_t trial_seed = split_seed(cfg.seed, trial);
    const BootstrapSplit split = bootstrap_split(events, cfg.bootstrap_fraction, trial_seed);
    PipelineConfig tc = cfg;
    tc.seed = trial_seed;
    std::vector<Matrix> train, stream;
    for (auto i : split.train) train.push_back(slices[i]);
    for (auto i : split.test) stream.push_back(slices[i]);
    const StreamResult r = run_stream(tc, train, stream);
    out.outcomes.push_back(score_detection(events, split.test, r.decision_values));
    scores.push_back(out.outcomes.back().score);
  }
  out.report = summarize_trials(std::move(scores));
  return out;
}

}  // namespace necpd

#endif  // NECPD_PIPELINE_HPP
