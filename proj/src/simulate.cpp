#include "fdivlab/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <thread>

#include "fdivlab/error.hpp"

namespace fdivlab {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng make_stream(std::uint64_t seed, std::uint64_t trial, StreamRole role) {
  const std::uint64_t r = static_cast<std::uint64_t>(role);
  const std::uint64_t a = splitmix64(seed);
  const std::uint64_t b = splitmix64(a ^ splitmix64(trial + 0x632be59bd9b4e019ULL));
  const std::uint64_t c = splitmix64(b ^ (r * 0xd1b54a32d192ed03ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32),
                    static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(trial),
                    static_cast<std::uint32_t>(r)};
  return Rng(seq);
}

ObservationFunction ObservationFunction::finite(Eigen::MatrixXd table) {
  if (table.rows() == 0 || table.cols() == 0) throw Error(ErrorCode::DimensionMismatch, "observation table is empty");
  if (!table.allFinite()) throw Error(ErrorCode::InvalidArgument, "observation table must be finite");
  ObservationFunction h;
  h.family = Family::FiniteState;
  h.m = static_cast<int>(table.cols());
  h.table = std::move(table);
  return h;
}

ObservationFunction ObservationFunction::linear_map(Eigen::MatrixXd hm) {
  if (hm.rows() == 0 || hm.cols() == 0) throw Error(ErrorCode::DimensionMismatch, "observation matrix is empty");
  ObservationFunction h;
  h.family = Family::LinearGaussian;
  h.m = static_cast<int>(hm.rows());
  h.linear = hm;
  h.map = [hm](const Eigen::VectorXd& x) -> Eigen::VectorXd { return hm * x; };
  return h;
}

ObservationFunction ObservationFunction::callable(Family family, int m,
                                                  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f) {
  if (m < 1) throw Error(ErrorCode::InvalidArgument, "observation dimension must be >= 1");
  ObservationFunction h;
  h.family = family;
  h.m = m;
  h.map = std::move(f);
  return h;
}

Eigen::VectorXd ObservationFunction::at(const Eigen::VectorXd& x) const {
  if (!map) throw Error(ErrorCode::FamilyMismatch, "observation function has no continuous map");
  return map(x);
}

int JumpPath::state_at(double t) const {
  const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
  return states[static_cast<std::size_t>(it - jump_times.begin())];
}

JumpPath sample_jump_path(const Eigen::MatrixXd& rates, int x0, double horizon, Rng& rng) {
  JumpPath path;
  path.horizon = horizon;
  path.states.push_back(x0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double t = 0.0;
  int x = x0;
  const Eigen::Index d = rates.rows();
  for (;;) {
    const double exit = -rates(x, x);
    if (exit <= 0.0) break;
    std::exponential_distribution<double> hold(exit);
    t += hold(rng);
    if (t > horizon) break;
    double u = unif(rng) * exit;
    int next = x;
    for (Eigen::Index y = 0; y < d; ++y) {
      if (y == x) continue;
      next = static_cast<int>(y);
      u -= rates(x, y);
      if (u < 0.0) break;
    }
    x = next;
    path.jump_times.push_back(t);
    path.states.push_back(x);
  }
  return path;
}

int sample_state(const Eigen::VectorXd& p, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  int last = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) <= 0.0) continue;
    last = static_cast<int>(i);
    u -= p(i);
    if (u < 0.0) return last;
  }
  return last;
}

Eigen::VectorXd sample_point(const Measure& mu, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  switch (mu.family()) {
    case Family::FiniteState: return Eigen::VectorXd::Constant(1, sample_state(mu.masses(), rng));
    case Family::Langevin1D: {
      const int cell = sample_state(mu.masses(), rng);
      std::uniform_real_distribution<double> unif(-0.5, 0.5);
      return Eigen::VectorXd::Constant(1, mu.grid().center(cell) + unif(rng) * mu.grid().dx());
    }
    case Family::LinearGaussian: {
      const Eigen::LLT<Eigen::MatrixXd> llt(mu.covariance());
      Eigen::VectorXd xi(mu.size());
      for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = normal(rng);
      return mu.mean() + llt.matrixL() * xi;
    }
  }
  throw Error(ErrorCode::UnsupportedFamily, "unknown family");
}

namespace {

std::size_t grid_steps(double horizon, double dt) {
  if (!(dt > 0.0) || !(horizon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "need dt > 0 and T >= 0");
  const double n = std::round(horizon / dt);
  if (std::abs(n * dt - horizon) > 1e-9 * std::max(1.0, horizon)) {
    throw Error(ErrorCode::InvalidArgument, "dt must divide T");
  }
  return static_cast<std::size_t>(n);
}

PathBundle finite_path(const Eigen::MatrixXd& rates, int x0, double horizon, double dt, std::uint64_t seed,
                       std::uint64_t trial) {
  const std::size_t n = grid_steps(horizon, dt);
  Rng rng = make_stream(seed, trial, StreamRole::State);
  const JumpPath jp = sample_jump_path(rates, x0, horizon, rng);
  PathBundle p;
  p.family = Family::FiniteState;
  p.dt = dt;
  p.seed = seed;
  p.trial = trial;
  p.times.resize(n + 1);
  p.states.resize(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    p.times[k] = static_cast<double>(k) * dt;
    p.states[k] = jp.state_at(p.times[k]);
  }
  return p;
}

}  // namespace

PathBundle sample_state_path_from(const Generator& gen, int x0, double horizon, double dt, std::uint64_t seed,
                                  std::uint64_t trial) {
  if (gen.family() != Family::FiniteState) throw Error(ErrorCode::UnsupportedFamily, "fixed start needs a finite chain");
  if (x0 < 0 || x0 >= gen.dimension()) throw Error(ErrorCode::InvalidArgument, "initial state out of range");
  return finite_path(gen.rates(), x0, horizon, dt, seed, trial);
}

PathBundle sample_state_path(const Generator& gen, const Measure& mu0, double horizon, double dt,
                             std::uint64_t seed, std::uint64_t trial) {
  if (gen.family() == Family::FiniteState) {
    if (mu0.family() != Family::FiniteState) throw Error(ErrorCode::FamilyMismatch, "prior family differs from generator");
    Rng init = make_stream(seed, trial, StreamRole::Initial);
    return finite_path(gen.rates(), sample_state(mu0.masses(), init), horizon, dt, seed, trial);
  }
  return sample_state_path(Protocol::stationary(gen), mu0, horizon, dt, seed, trial);
}

PathBundle sample_state_path(const Protocol& protocol, const Measure& mu0, double horizon, double dt,
                             std::uint64_t seed, std::uint64_t trial) {
  if (protocol.family() == Family::FiniteState) {
    return sample_state_path(protocol.generator_at(0.0), mu0, horizon, dt, seed, trial);
  }
  if (mu0.family() != protocol.family()) throw Error(ErrorCode::FamilyMismatch, "prior family differs from protocol");
  const std::size_t n = grid_steps(horizon, dt);
  Rng init = make_stream(seed, trial, StreamRole::Initial);
  Rng rng = make_stream(seed, trial, StreamRole::State);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::VectorXd x = sample_point(mu0, init);
  const Eigen::Index d = x.size();
  PathBundle p;
  p.family = protocol.family();
  p.dt = dt;
  p.seed = seed;
  p.trial = trial;
  p.times.resize(n + 1);
  p.positions.resize(static_cast<Eigen::Index>(n + 1), d);
  p.positions.row(0) = x.transpose();
  p.times[0] = 0.0;
  const double noise = std::sqrt(2.0 * dt);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    Eigen::VectorXd grad(d);
    if (protocol.family() == Family::Langevin1D) {
      grad(0) = protocol.time_potential().gradient(t, x(0));
    } else {
      grad = protocol.stiffness(t) * x;
    }
    Eigen::VectorXd xi(d);
    for (Eigen::Index i = 0; i < d; ++i) xi(i) = normal(rng);
    x += -grad * dt + noise * xi;
    p.times[k + 1] = static_cast<double>(k + 1) * dt;
    p.positions.row(static_cast<Eigen::Index>(k + 1)) = x.transpose();
  }
  return p;
}

const Eigen::MatrixXd& sample_observation(PathBundle& path, const ObservationFunction& h) {
  const std::size_t n = path.steps();
  const int m = h.dim();
  Rng rng = make_stream(path.seed, path.trial, StreamRole::ObservationNoise);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sq = std::sqrt(path.dt);
  path.dz.resize(static_cast<Eigen::Index>(n), m);
  for (std::size_t k = 0; k < n; ++k) {
    Eigen::VectorXd hx;
    if (path.family == Family::FiniteState) {
      if (h.family != Family::FiniteState) throw Error(ErrorCode::FamilyMismatch, "observation family differs from path");
      hx = h.at_state(path.states[k]);
    } else {
      hx = h.at(path.positions.row(static_cast<Eigen::Index>(k)).transpose());
    }
    for (int j = 0; j < m; ++j) path.dz(static_cast<Eigen::Index>(k), j) = hx(j) * path.dt + sq * normal(rng);
  }
  return path.dz;
}

namespace {

constexpr char kMagic[4] = {'F', 'D', 'P', 'B'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, T value) {
  std::uint64_t bits = 0;
  if constexpr (std::is_floating_point_v<T>) bits = std::bit_cast<std::uint64_t>(static_cast<double>(value));
  else bits = static_cast<std::uint64_t>(value);
  const int width = std::is_floating_point_v<T> ? 8 : static_cast<int>(sizeof(T));
  char buf[8];
  for (int i = 0; i < width; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(buf, width);
}

template <typename T>
T get(std::ifstream& in) {
  const int width = std::is_floating_point_v<T> ? 8 : static_cast<int>(sizeof(T));
  unsigned char buf[8] = {};
  if (!in.read(reinterpret_cast<char*>(buf), width)) throw Error(ErrorCode::IoFailure, "truncated path bundle");
  std::uint64_t bits = 0;
  for (int i = 0; i < width; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  if constexpr (std::is_floating_point_v<T>) return std::bit_cast<double>(bits);
  else return static_cast<T>(bits);
}

}  // namespace

void write_path_bundle(const PathBundle& path, const std::string& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + file);
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, path.seed);
  put<std::uint64_t>(out, path.trial);
  put<double>(out, path.dt);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(path.family));
  put<std::uint64_t>(out, path.times.size());
  put<std::uint64_t>(out, static_cast<std::uint64_t>(path.positions.cols()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(path.dz.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(path.dz.cols()));
  for (double t : path.times) put<double>(out, t);
  if (path.family == Family::FiniteState) {
    for (int s : path.states) put<std::int32_t>(out, s);
  } else {
    for (Eigen::Index i = 0; i < path.positions.rows(); ++i)
      for (Eigen::Index j = 0; j < path.positions.cols(); ++j) put<double>(out, path.positions(i, j));
  }
  for (Eigen::Index i = 0; i < path.dz.rows(); ++i)
    for (Eigen::Index j = 0; j < path.dz.cols(); ++j) put<double>(out, path.dz(i, j));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + file);
}

PathBundle read_path_bundle(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + file);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw Error(ErrorCode::IoFailure, "not a path bundle");
  if (get<std::uint32_t>(in) != kVersion) throw Error(ErrorCode::IoFailure, "unsupported path bundle version");
  PathBundle p;
  p.seed = get<std::uint64_t>(in);
  p.trial = get<std::uint64_t>(in);
  p.dt = get<double>(in);
  p.family = static_cast<Family>(get<std::uint32_t>(in));
  const auto nt = get<std::uint64_t>(in);
  const auto d = static_cast<Eigen::Index>(get<std::uint64_t>(in));
  const auto zr = static_cast<Eigen::Index>(get<std::uint64_t>(in));
  const auto zc = static_cast<Eigen::Index>(get<std::uint64_t>(in));
  p.times.resize(nt);
  for (auto& t : p.times) t = get<double>(in);
  if (p.family == Family::FiniteState) {
    p.states.resize(nt);
    for (auto& s : p.states) s = get<std::int32_t>(in);
  } else {
    p.positions.resize(static_cast<Eigen::Index>(nt), d);
    for (Eigen::Index i = 0; i < p.positions.rows(); ++i)
      for (Eigen::Index j = 0; j < d; ++j) p.positions(i, j) = get<double>(in);
  }
  p.dz.resize(zr, zc);
  for (Eigen::Index i = 0; i < zr; ++i)
    for (Eigen::Index j = 0; j < zc; ++j) p.dz(i, j) = get<double>(in);
  return p;
}

namespace {
std::atomic<int> g_threads{0};
}

int default_threads() {
  const int t = g_threads.load();
  if (t > 0) return t;
  return std::max(1u, std::thread::hardware_concurrency());
}

void set_default_threads(int threads) { g_threads.store(std::max(0, threads)); }

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
  if (threads <= 0) threads = default_threads();
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace fdivlab
