#pragma once

#include <cmath>

#include "uqkit/tape.hpp"

namespace uq::ad {

// Second-order univariate Taylor jet: value, first and second derivative with
// respect to one designated input coordinate. The component type T is either
// double (plain evaluation) or Var (evaluation recorded on a tape, so the jet
// outputs stay differentiable with respect to network parameters).
template <class T>
struct Jet2 {
  T v, d1, d2;
};

// First-order jet, for coordinates where only one derivative is needed.
template <class T>
struct Jet1 {
  T v, d1;
};

template <class T>
inline Jet2<T> operator+(const Jet2<T>& a, const Jet2<T>& b) {
  return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2};
}
template <class T>
inline Jet2<T> operator-(const Jet2<T>& a, const Jet2<T>& b) {
  return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2};
}
template <class T>
inline Jet2<T> operator-(const Jet2<T>& a) {
  return {-a.v, -a.d1, -a.d2};
}
template <class T>
inline Jet2<T> operator*(const Jet2<T>& a, const Jet2<T>& b) {
  return {a.v * b.v, a.d1 * b.v + a.v * b.d1, a.d2 * b.v + 2.0 * (a.d1 * b.d1) + a.v * b.d2};
}
// Scale by a constant of the component type (a network weight).
template <class T>
inline Jet2<T> operator*(const T& s, const Jet2<T>& a) {
  return {s * a.v, s * a.d1, s * a.d2};
}
template <class T>
inline Jet2<T> operator*(const Jet2<T>& a, const T& s) {
  return s * a;
}
inline Jet2<double> operator*(const Jet2<double>& a, double s) {
  return {a.v * s, a.d1 * s, a.d2 * s};
}
inline Jet2<double> operator*(double s, const Jet2<double>& a) { return a * s; }
inline Jet2<Var> operator*(const Jet2<Var>& a, double s) {
  return {a.v * s, a.d1 * s, a.d2 * s};
}
inline Jet2<Var> operator*(double s, const Jet2<Var>& a) { return a * s; }
template <class T>
inline Jet2<T> operator+(const Jet2<T>& a, const T& s) {
  return {a.v + s, a.d1, a.d2};
}
template <class T>
inline Jet2<T> operator+(const T& s, const Jet2<T>& a) {
  return a + s;
}

template <class T>
inline Jet2<T> inv(const Jet2<T>& b) {
  T f = 1.0 / b.v;
  T f2 = f * f;
  return {f, -(f2 * b.d1), 2.0 * (f2 * f * (b.d1 * b.d1)) - f2 * b.d2};
}
inline Jet2<double> inv(const Jet2<double>& b) {
  double f = 1.0 / b.v;
  double f2 = f * f;
  return {f, -f2 * b.d1, 2.0 * f2 * f * b.d1 * b.d1 - f2 * b.d2};
}
template <class T>
inline Jet2<T> operator/(const Jet2<T>& a, const Jet2<T>& b) {
  return a * inv(b);
}

// Unary chain rule: given f(v), f'(v), f''(v).
template <class T>
inline Jet2<T> unary_jet(const Jet2<T>& x, const T& f, const T& fp, const T& fpp) {
  return {f, fp * x.d1, fpp * (x.d1 * x.d1) + fp * x.d2};
}

inline Jet2<double> tanh(const Jet2<double>& x) {
  double t = std::tanh(x.v);
  double fp = 1.0 - t * t;
  return unary_jet(x, t, fp, -2.0 * t * fp);
}
inline Jet2<Var> tanh(const Jet2<Var>& x) {
  Var t = tanh(x.v);
  Var fp = 1.0 - t * t;
  Var fpp = -2.0 * (t * fp);
  return unary_jet(x, t, fp, fpp);
}

inline Jet2<double> exp(const Jet2<double>& x) {
  double e = std::exp(x.v);
  return unary_jet(x, e, e, e);
}
inline Jet2<Var> exp(const Jet2<Var>& x) {
  Var e = exp(x.v);
  return unary_jet(x, e, e, e);
}

inline Jet2<double> log(const Jet2<double>& x) {
  double ix = 1.0 / x.v;
  return unary_jet(x, std::log(x.v), ix, -ix * ix);
}
inline Jet2<Var> log(const Jet2<Var>& x) {
  Var ix = 1.0 / x.v;
  Var mix2 = -(ix * ix);
  return unary_jet(x, log(x.v), ix, mix2);
}

inline Jet2<double> sin(const Jet2<double>& x) {
  double s = std::sin(x.v), c = std::cos(x.v);
  return unary_jet(x, s, c, -s);
}
inline Jet2<Var> sin(const Jet2<Var>& x) {
  Var s = sin(x.v), c = cos(x.v);
  Var ms = -s;
  return unary_jet(x, s, c, ms);
}

inline Jet2<double> cos(const Jet2<double>& x) {
  double s = std::sin(x.v), c = std::cos(x.v);
  return unary_jet(x, c, -s, -c);
}
inline Jet2<Var> cos(const Jet2<Var>& x) {
  Var s = sin(x.v), c = cos(x.v);
  Var ms = -s, mc = -c;
  return unary_jet(x, c, ms, mc);
}

inline Jet2<double> pow_int(const Jet2<double>& x, int n) {
  double f = pow_int_value(x.v, n);
  double fp = n == 0 ? 0.0 : n * pow_int_value(x.v, n - 1);
  double fpp = (n == 0 || n == 1) ? 0.0 : double(n) * (n - 1) * pow_int_value(x.v, n - 2);
  return unary_jet(x, f, fp, fpp);
}
inline Jet2<Var> pow_int(const Jet2<Var>& x, int n) {
  Var f = pow_int(x.v, n);
  Var fp = n == 0 ? (x.v * 0.0) : pow_int(x.v, n - 1) * double(n);
  Var fpp = (n == 0 || n == 1) ? (x.v * 0.0) : pow_int(x.v, n - 2) * (double(n) * (n - 1));
  return unary_jet(x, f, fp, fpp);
}

template <class T>
inline Jet2<T> square(const Jet2<T>& x) {
  return x * x;
}

// ---- First-order jets ----

template <class T>
inline Jet1<T> operator+(const Jet1<T>& a, const Jet1<T>& b) {
  return {a.v + b.v, a.d1 + b.d1};
}
template <class T>
inline Jet1<T> operator-(const Jet1<T>& a, const Jet1<T>& b) {
  return {a.v - b.v, a.d1 - b.d1};
}
template <class T>
inline Jet1<T> operator-(const Jet1<T>& a) {
  return {-a.v, -a.d1};
}
template <class T>
inline Jet1<T> operator*(const Jet1<T>& a, const Jet1<T>& b) {
  return {a.v * b.v, a.d1 * b.v + a.v * b.d1};
}
template <class T>
inline Jet1<T> operator*(const T& s, const Jet1<T>& a) {
  return {s * a.v, s * a.d1};
}
template <class T>
inline Jet1<T> operator*(const Jet1<T>& a, const T& s) {
  return s * a;
}
inline Jet1<double> operator*(const Jet1<double>& a, double s) { return {a.v * s, a.d1 * s}; }
inline Jet1<double> operator*(double s, const Jet1<double>& a) { return a * s; }
inline Jet1<Var> operator*(const Jet1<Var>& a, double s) { return {a.v * s, a.d1 * s}; }
inline Jet1<Var> operator*(double s, const Jet1<Var>& a) { return a * s; }
template <class T>
inline Jet1<T> operator+(const Jet1<T>& a, const T& s) {
  return {a.v + s, a.d1};
}
template <class T>
inline Jet1<T> operator+(const T& s, const Jet1<T>& a) {
  return a + s;
}
template <class T>
inline Jet1<T> operator/(const Jet1<T>& a, const Jet1<T>& b) {
  T f = 1.0 / b.v;
  return a * Jet1<T>{f, -(f * f * b.d1)};
}

inline Jet1<double> tanh(const Jet1<double>& x) {
  double t = std::tanh(x.v);
  return {t, (1.0 - t * t) * x.d1};
}
inline Jet1<Var> tanh(const Jet1<Var>& x) {
  Var t = tanh(x.v);
  Var fp = 1.0 - t * t;
  return {t, fp * x.d1};
}
inline Jet1<double> exp(const Jet1<double>& x) {
  double e = std::exp(x.v);
  return {e, e * x.d1};
}
inline Jet1<Var> exp(const Jet1<Var>& x) {
  Var e = exp(x.v);
  return {e, e * x.d1};
}
inline Jet1<double> log(const Jet1<double>& x) { return {std::log(x.v), x.d1 / x.v}; }
inline Jet1<Var> log(const Jet1<Var>& x) {
  Var lv = log(x.v);
  return {lv, x.d1 / x.v};
}
inline Jet1<double> sin(const Jet1<double>& x) { return {std::sin(x.v), std::cos(x.v) * x.d1}; }
inline Jet1<Var> sin(const Jet1<Var>& x) {
  Var s = sin(x.v), c = cos(x.v);
  return {s, c * x.d1};
}
inline Jet1<double> cos(const Jet1<double>& x) { return {std::cos(x.v), -std::sin(x.v) * x.d1}; }
inline Jet1<Var> cos(const Jet1<Var>& x) {
  Var s = sin(x.v), c = cos(x.v);
  Var ms = -s;
  return {c, ms * x.d1};
}
inline Jet1<double> pow_int(const Jet1<double>& x, int n) {
  double f = pow_int_value(x.v, n);
  double fp = n == 0 ? 0.0 : n * pow_int_value(x.v, n - 1);
  return {f, fp * x.d1};
}
inline Jet1<Var> pow_int(const Jet1<Var>& x, int n) {
  Var f = pow_int(x.v, n);
  Var fp = n == 0 ? (x.v * 0.0) : pow_int(x.v, n - 1) * double(n);
  return {f, fp * x.d1};
}

}  // namespace uq::ad
