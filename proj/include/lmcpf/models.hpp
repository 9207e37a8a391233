#pragma once

#include "lmcpf/ensemble.hpp"
#include "lmcpf/types.hpp"

namespace lmcpf {

enum class ModelKind { Lorenz63, Lorenz96 };

struct Lorenz63Params {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
};

struct Lorenz96Params {
  int n = 40;
  double forcing = 8.0;
};

struct ModelSpec {
  ModelKind kind = ModelKind::Lorenz96;
  Lorenz63Params l63;
  Lorenz96Params l96;
  double dt = 0.05;
  int steps_per_cycle = 1;

  int dim() const { return kind == ModelKind::Lorenz63 ? 3 : l96.n; }
  // Lorenz-96 lives on a ring; Lorenz-63 variables have no geometry to wrap.
  bool cyclic() const { return kind == ModelKind::Lorenz96; }

  static ModelSpec lorenz63(double dt = 0.01, int steps_per_cycle = 1);
  static ModelSpec lorenz96(int n = 40, double forcing = 8.0,
                            double dt = 0.05, int steps_per_cycle = 1);
  void validate() const;
};

Vector tendency(const ModelSpec& model, const Vector& x);

// One classical fourth-order Runge-Kutta step of length model.dt.
Vector rk4_step(const ModelSpec& model, const Vector& x);

Vector advance(const ModelSpec& model, Vector x, int steps);

// Advances every member by steps_per_cycle RK4 steps.
Ensemble propagate(const ModelSpec& model, const Ensemble& ens);

namespace detail {

// Generic RK4 stage so the integrator can be exercised on simple test
// systems independently of the model tendencies.
template <class F>
Vector rk4(F&& f, const Vector& x, double dt) {
  Vector k1 = f(x);
  Vector k2 = f(x + 0.5 * dt * k1);
  Vector k3 = f(x + 0.5 * dt * k2);
  Vector k4 = f(x + dt * k3);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

}  // namespace lmcpf
