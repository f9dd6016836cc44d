#pragma once

#include "strato/types.hpp"

#include <functional>
#include <optional>
#include <string>

namespace strato {

// Scalar statistic phi(x), optionally paired with its exact expectation
// under the target density for error curves.
struct Observable {
  std::string name;
  std::function<double(const Vector&)> eval;
  std::optional<double> reference;
};

// Built-ins: x1, x2, x1sq, x2sq, x1x2, sumsq (the squared norm).
inline Observable make_observable(const std::string& name, int dim,
                                  std::optional<double> reference = std::nullopt) {
  auto need = [&](int d) {
    if (dim < d)
      throw ConfigError("observable " + name + " needs dimension >= " + std::to_string(d));
  };
  Observable o;
  o.name = name;
  o.reference = reference;
  if (name == "x1") {
    need(1);
    o.eval = [](const Vector& x) { return x[0]; };
  } else if (name == "x2") {
    need(2);
    o.eval = [](const Vector& x) { return x[1]; };
  } else if (name == "x1sq") {
    need(1);
    o.eval = [](const Vector& x) { return x[0] * x[0]; };
  } else if (name == "x2sq") {
    need(2);
    o.eval = [](const Vector& x) { return x[1] * x[1]; };
  } else if (name == "x1x2") {
    need(2);
    o.eval = [](const Vector& x) { return x[0] * x[1]; };
  } else if (name == "sumsq") {
    need(1);
    o.eval = [](const Vector& x) { return x.squaredNorm(); };
  } else {
    throw ConfigError("unknown observable: " + name);
  }
  return o;
}

}  // namespace strato
