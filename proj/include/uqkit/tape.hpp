#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace uq::ad {

// Reverse-mode tape. Every recorded node keeps its parent indices and the
// local partial derivatives, computed at forward time, so the reverse sweep
// is a single backward loop with no dispatch. The tape is rebuilt on every
// gradient evaluation; clear() keeps the allocated capacity.
class Tape {
 public:
  int leaf(double v) {
    vals_.push_back(v);
    recs_.push_back(Rec{0.0, 0.0, -1, -1});
    return static_cast<int>(vals_.size()) - 1;
  }

  int node1(double v, int p0, double w0) {
    vals_.push_back(v);
    recs_.push_back(Rec{w0, 0.0, p0, -1});
    return static_cast<int>(vals_.size()) - 1;
  }

  int node2(double v, int p0, double w0, int p1, double w1) {
    vals_.push_back(v);
    recs_.push_back(Rec{w0, w1, p0, p1});
    return static_cast<int>(vals_.size()) - 1;
  }

  double val(int i) const { return vals_[i]; }
  std::size_t size() const { return vals_.size(); }

  void clear() {
    vals_.clear();
    recs_.clear();
  }

  void reserve(std::size_t n) {
    vals_.reserve(n);
    recs_.reserve(n);
  }

  // Accumulates d(root)/d(node i) into adjoint[i] for every node i <= root.
  void backward(int root, std::vector<double>& adjoint) const {
    adjoint.assign(vals_.size(), 0.0);
    adjoint[root] = 1.0;
    for (int i = root; i >= 0; --i) {
      double a = adjoint[i];
      if (a == 0.0) continue;
      const Rec& r = recs_[i];
      if (r.p0 >= 0) adjoint[r.p0] += r.w0 * a;
      if (r.p1 >= 0) adjoint[r.p1] += r.w1 * a;
    }
  }

 private:
  struct Rec {
    double w0, w1;
    int p0, p1;
  };
  std::vector<double> vals_;
  std::vector<Rec> recs_;
};

// Handle to a tape node; carries the value inline so arithmetic does not
// re-read the tape.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;
  double v = 0.0;
};

inline Var make_var(Tape& t, double value) { return Var{&t, t.leaf(value), value}; }

inline Var operator+(const Var& a, const Var& b) {
  return Var{a.tape, a.tape->node2(a.v + b.v, a.idx, 1.0, b.idx, 1.0), a.v + b.v};
}
inline Var operator+(const Var& a, double b) {
  return Var{a.tape, a.tape->node1(a.v + b, a.idx, 1.0), a.v + b};
}
inline Var operator+(double a, const Var& b) { return b + a; }

inline Var operator-(const Var& a, const Var& b) {
  return Var{a.tape, a.tape->node2(a.v - b.v, a.idx, 1.0, b.idx, -1.0), a.v - b.v};
}
inline Var operator-(const Var& a, double b) {
  return Var{a.tape, a.tape->node1(a.v - b, a.idx, 1.0), a.v - b};
}
inline Var operator-(double a, const Var& b) {
  return Var{b.tape, b.tape->node1(a - b.v, b.idx, -1.0), a - b.v};
}
inline Var operator-(const Var& a) {
  return Var{a.tape, a.tape->node1(-a.v, a.idx, -1.0), -a.v};
}

inline Var operator*(const Var& a, const Var& b) {
  return Var{a.tape, a.tape->node2(a.v * b.v, a.idx, b.v, b.idx, a.v), a.v * b.v};
}
inline Var operator*(const Var& a, double b) {
  return Var{a.tape, a.tape->node1(a.v * b, a.idx, b), a.v * b};
}
inline Var operator*(double a, const Var& b) { return b * a; }

inline Var operator/(const Var& a, const Var& b) {
  double inv = 1.0 / b.v;
  double q = a.v * inv;
  return Var{a.tape, a.tape->node2(q, a.idx, inv, b.idx, -q * inv), q};
}
inline Var operator/(const Var& a, double b) { return a * (1.0 / b); }
inline Var operator/(double a, const Var& b) {
  double inv = 1.0 / b.v;
  double q = a * inv;
  return Var{b.tape, b.tape->node1(q, b.idx, -q * inv), q};
}

inline Var tanh(const Var& x) {
  double t = std::tanh(x.v);
  return Var{x.tape, x.tape->node1(t, x.idx, 1.0 - t * t), t};
}

inline Var exp(const Var& x) {
  double e = std::exp(x.v);
  return Var{x.tape, x.tape->node1(e, x.idx, e), e};
}

inline Var log(const Var& x) {
  return Var{x.tape, x.tape->node1(std::log(x.v), x.idx, 1.0 / x.v), std::log(x.v)};
}

inline Var sin(const Var& x) {
  return Var{x.tape, x.tape->node1(std::sin(x.v), x.idx, std::cos(x.v)), std::sin(x.v)};
}

inline Var cos(const Var& x) {
  return Var{x.tape, x.tape->node1(std::cos(x.v), x.idx, -std::sin(x.v)), std::cos(x.v)};
}

inline double pow_int_value(double x, int n) {
  if (n < 0) return 1.0 / pow_int_value(x, -n);
  double r = 1.0, b = x;
  for (int e = n; e > 0; e >>= 1) {
    if (e & 1) r *= b;
    b *= b;
  }
  return r;
}

inline Var pow_int(const Var& x, int n) {
  double v = pow_int_value(x.v, n);
  double w = n == 0 ? 0.0 : n * pow_int_value(x.v, n - 1);
  return Var{x.tape, x.tape->node1(v, x.idx, w), v};
}

// Composed helpers (not primitives).
inline Var square(const Var& x) { return x * x; }

// log(1 + exp(x)); switches to the asymptote for large inputs, where in
// 64-bit arithmetic the two are indistinguishable and exp would overflow.
inline Var softplus(const Var& x) {
  if (x.v > 30.0) return Var{x.tape, x.tape->node1(x.v, x.idx, 1.0), x.v};
  return log(exp(x) + 1.0);
}

inline double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

}  // namespace uq::ad
