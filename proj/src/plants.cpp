#include "icx/plants.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace icx {

Vector PointMassPlant::initial_state(RngStream& rng) const {
  Vector s(4);
  s << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
      rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5);
  return s;
}

StepResult PointMassPlant::step(const Vector& s, const Vector& u, long) const {
  if (s.size() != 4 || u.size() != 2)
    throw std::invalid_argument("PointMassPlant::step: dim mismatch");
  StepResult r;
  const Vector v = s.tail(2);
  const Vector v_next = v + p_.dt * (p_.gain * u - p_.drag * v);
  r.next_state.resize(4);
  r.next_state.head(2) = s.head(2) + p_.dt * v_next;
  r.next_state.tail(2) = v_next;
  r.reward = v_next[0] - p_.reward_c * (u / p_.reward_alpha).squaredNorm();
  r.output = Vector::Constant(1, r.reward);
  return r;
}

RcThermalParams RcThermalParams::defaults() {
  RcThermalParams p;
  p.alpha = Vector::Constant(4, 0.05);
  p.alpha[1] = 0.06;
  p.alpha[3] = 0.04;
  p.kappa = Matrix::Zero(4, 4);
  // Ring of zones with a weak diagonal link.
  const double k = 0.02;
  for (int i = 0; i < 4; ++i) {
    p.kappa(i, (i + 1) % 4) = k;
    p.kappa((i + 1) % 4, i) = k;
  }
  p.kappa(0, 2) = p.kappa(2, 0) = 0.01;
  p.beta = Vector::Constant(4, 1.5);
  return p;
}

double outside_temperature(const RcThermalParams& p, long t) {
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / p.period;
  // Daily cycle, a slow multi-day swing, and seeded per-step jitter; all
  // deterministic in t so horizon forecasts equal the realized signal.
  RngStream jitter(p.w_seed, static_cast<std::uint64_t>(t));
  return p.w_mean + p.w_amp * std::sin(phase) +
         0.5 * p.w_amp * std::sin(phase / 9.3) +
         p.w_noise * jitter.uniform(-1.0, 1.0);
}

RcThermalPlant::RcThermalPlant(RcThermalParams p) : p_(std::move(p)) {
  if (p_.alpha.size() != p_.zones || p_.beta.size() != p_.zones ||
      p_.kappa.rows() != p_.zones || p_.kappa.cols() != p_.zones)
    throw std::invalid_argument("RcThermalPlant: parameter dims");
}

Vector RcThermalPlant::initial_state(RngStream& rng) const {
  Vector s(p_.zones + 1);
  for (int i = 0; i < p_.zones; ++i) s[i] = rng.uniform(20.0, 23.0);
  s[p_.zones] = outside_temperature(p_, 0);
  return s;
}

Vector RcThermalPlant::linear_temp_update(const Vector& temps, double w,
                                          const Vector& u) const {
  Vector next = temps;
  for (int i = 0; i < p_.zones; ++i) {
    double dq = p_.alpha[i] * (w - temps[i]);
    for (int j = 0; j < p_.zones; ++j)
      dq += p_.kappa(i, j) * (temps[j] - temps[i]);
    next[i] += dq + p_.beta[i] * u[i];
  }
  return next;
}

double RcThermalPlant::power(const Vector& u) const {
  double y = p_.base;
  for (int i = 0; i < u.size(); ++i)
    y += p_.c1 * u[i] * u[i] + p_.c2 * std::abs(u[i]) + p_.c3 * u[i];
  return y;
}

StepResult RcThermalPlant::step(const Vector& s, const Vector& u, long t) const {
  if (s.size() != state_dim() || u.size() != action_dim())
    throw std::invalid_argument("RcThermalPlant::step: dim mismatch");
  StepResult r;
  r.next_state.resize(state_dim());
  r.next_state.head(p_.zones) =
      linear_temp_update(s.head(p_.zones), s[p_.zones], u);
  r.next_state[p_.zones] = outside_temperature(p_, t + 1);
  r.output = Vector::Constant(1, power(u));
  r.reward = -r.output[0];
  return r;
}

Vector BatteryPlant::initial_state(RngStream& rng) const {
  return Vector::Constant(1, rng.uniform(0.3, 0.7));
}

double BatteryPlant::degradation_cost(double u) const {
  const double a = std::abs(u);
  const double knee_excess = std::max(a - p_.knee, 0.0);
  return p_.k_quad * u * u + p_.k_abs * a + p_.k_knee * knee_excess * knee_excess +
         p_.base;
}

double BatteryPlant::degradation_grad(double u) const {
  const double sgn = (u > 0.0) ? 1.0 : (u < 0.0 ? -1.0 : 0.0);
  const double a = std::abs(u);
  const double knee_excess = std::max(a - p_.knee, 0.0);
  return 2.0 * p_.k_quad * u + p_.k_abs * sgn + 2.0 * p_.k_knee * knee_excess * sgn;
}

StepResult BatteryPlant::step(const Vector& s, const Vector& u, long) const {
  if (s.size() != 1 || u.size() != 1)
    throw std::invalid_argument("BatteryPlant::step: dim mismatch");
  StepResult r;
  const double rate = (u[0] >= 0.0) ? p_.eta_charge * u[0] : u[0] / p_.eta_discharge;
  const double soc = std::clamp(s[0] + rate * p_.dt, 0.0, 1.0);
  r.next_state = Vector::Constant(1, soc);
  r.output = Vector::Constant(1, degradation_cost(u[0]));
  r.reward = -r.output[0];
  return r;
}

CirclesDataset circles_dataset(int n, double inner_radius, double outer_radius,
                               double noise, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("circles_dataset: n must be >= 2");
  RngStream rng(seed, 4);
  CirclesDataset ds;
  ds.X.resize(2, n);
  ds.labels.resize(n);
  const int n_inner = n / 2;
  for (int j = 0; j < n; ++j) {
    const bool inner = j < n_inner;
    const double r0 = inner ? inner_radius : outer_radius;
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double r = r0 + rng.gaussian(0.0, noise);
    ds.X(0, j) = r * std::cos(theta);
    ds.X(1, j) = r * std::sin(theta);
    ds.labels[j] = inner ? 0.0 : 1.0;
  }
  return ds;
}

bool TouProfile::is_peak(long t) const {
  const long tt = ((t % period) + period) % period;
  return tt >= peak_start && tt < peak_end;
}

double tou_price(const TouProfile& profile, long t) {
  if (t < 0) throw std::invalid_argument("tou_price: t must be >= 0");
  return profile.is_peak(t) ? profile.peak : profile.off_peak;
}

std::unique_ptr<Plant> make_plant(const std::string& name) {
  if (name == "point-mass") return std::make_unique<PointMassPlant>();
  if (name == "rc-thermal") return std::make_unique<RcThermalPlant>();
  if (name == "battery") return std::make_unique<BatteryPlant>();
  throw std::invalid_argument("make_plant: unknown plant '" + name + "'");
}

}  // namespace icx
