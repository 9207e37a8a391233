#include "lmcpf/models.hpp"

#include <cmath>
#include <string>

namespace lmcpf {

ModelSpec ModelSpec::lorenz63(double dt, int steps_per_cycle) {
  ModelSpec m;
  m.kind = ModelKind::Lorenz63;
  m.dt = dt;
  m.steps_per_cycle = steps_per_cycle;
  return m;
}

ModelSpec ModelSpec::lorenz96(int n, double forcing, double dt,
                              int steps_per_cycle) {
  ModelSpec m;
  m.kind = ModelKind::Lorenz96;
  m.l96.n = n;
  m.l96.forcing = forcing;
  m.dt = dt;
  m.steps_per_cycle = steps_per_cycle;
  return m;
}

void ModelSpec::validate() const {
  if (dt <= 0.0) throw ConfigError("model: dt must be positive");
  if (steps_per_cycle < 0)
    throw ConfigError("model: steps_per_cycle must be non-negative");
  if (kind == ModelKind::Lorenz96 && l96.n < 4)
    throw ConfigError("model: Lorenz-96 needs at least 4 variables");
}

Vector tendency(const ModelSpec& model, const Vector& x) {
  if (x.size() != model.dim())
    throw DimensionMismatch("tendency: state has wrong dimension");
  if (model.kind == ModelKind::Lorenz63) {
    Vector dx(3);
    dx(0) = model.l63.sigma * (x(1) - x(0));
    dx(1) = x(0) * (model.l63.rho - x(2)) - x(1);
    dx(2) = x(0) * x(1) - model.l63.beta * x(2);
    return dx;
  }
  const int n = model.l96.n;
  Vector dx(n);
  for (int i = 0; i < n; ++i) {
    // Cyclic indexing: advection by the neighbouring differences plus
    // linear damping and constant forcing.
    const int ip1 = (i + 1) % n;
    const int im1 = (i - 1 + n) % n;
    const int im2 = (i - 2 + n) % n;
    dx(i) = (x(ip1) - x(im2)) * x(im1) - x(i) + model.l96.forcing;
  }
  return dx;
}

Vector rk4_step(const ModelSpec& model, const Vector& x) {
  Vector out = detail::rk4([&](const Vector& s) { return tendency(model, s); },
                           x, model.dt);
  if (!out.allFinite())
    throw NonFiniteState("rk4_step: state became non-finite");
  return out;
}

Vector advance(const ModelSpec& model, Vector x, int steps) {
  for (int s = 0; s < steps; ++s) x = rk4_step(model, x);
  return x;
}

Ensemble propagate(const ModelSpec& model, const Ensemble& ens) {
  if (ens.dim() != model.dim())
    throw DimensionMismatch("propagate: ensemble has wrong dimension");
  Ensemble out = ens;
  for (int l = 0; l < ens.size(); ++l) {
    try {
      out.members.col(l) = advance(model, ens.members.col(l),
                                   model.steps_per_cycle);
    } catch (const NonFiniteState&) {
      throw NonFiniteState("propagate: member " + std::to_string(l) +
                           " became non-finite");
    }
  }
  return out;
}

}  // namespace lmcpf
