#include "earm/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace earm {

int thread_count() {
  static int cached = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    if (const char* env = std::getenv("EARM_THREADS")) {
      int cap = std::atoi(env);
      if (cap >= 1 && cap < hw) hw = cap;
    }
    return hw;
  }();
  return cached;
}

void parallel_for(int n, const std::function<void(int)>& body) {
  int nt = thread_count();
  if (nt <= 1 || n < 64) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(nt);
  int chunk = (n + nt - 1) / nt;
  for (int t = 0; t < nt; ++t) {
    int lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([lo, hi, &body] {
      for (int i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& w : workers) w.join();
}

namespace {

// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration on P_n.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double p0, p1, dp;
    for (int it = 0; it < 100; ++it) {
      p0 = 1.0;
      p1 = t;
      for (int j = 2; j <= n; ++j) {
        double p2 = ((2.0 * j - 1.0) * t * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (t * p1 - p0) / (t * t - 1.0);
      double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    x[i] = -t;
    x[n - 1 - i] = t;
    double wi = 2.0 / ((1.0 - t * t) * dp * dp);
    w[i] = wi;
    w[n - 1 - i] = wi;
  }
}

EdgeQuadrature make_edge_rule(int degree) {
  int n = degree / 2 + 1;  // exact to 2n-1 >= degree
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  EdgeQuadrature rule;
  rule.degree = degree;
  rule.points.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.points[i] = 0.5 * (x[i] + 1.0);
    rule.weights[i] = 0.5 * w[i];
  }
  return rule;
}

// Duffy map (u,v) in [0,1]^2 -> (u(1-v), v), Jacobian (1-v). A total-degree-d
// integrand becomes degree <= d in u and <= d+1 in v, so n = (d+2)/2 + 1
// Gauss points per direction are exact.
TriangleQuadrature make_triangle_rule(int degree) {
  int n = (degree + 2) / 2 + 1;
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  TriangleQuadrature rule;
  rule.degree = degree;
  rule.points.reserve(n * n);
  rule.weights.reserve(n * n);
  for (int i = 0; i < n; ++i) {
    double u = 0.5 * (x[i] + 1.0), wu = 0.5 * w[i];
    for (int j = 0; j < n; ++j) {
      double v = 0.5 * (x[j] + 1.0), wv = 0.5 * w[j];
      rule.points.emplace_back(u * (1.0 - v), v);
      rule.weights.push_back(wu * wv * (1.0 - v));
    }
  }
  return rule;
}

std::mutex cache_mutex;

}  // namespace

const EdgeQuadrature& edge_rule(int degree) {
  static std::map<int, EdgeQuadrature> cache;
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto it = cache.find(degree);
  if (it == cache.end()) it = cache.emplace(degree, make_edge_rule(degree)).first;
  return it->second;
}

const TriangleQuadrature& triangle_rule(int degree) {
  static std::map<int, TriangleQuadrature> cache;
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto it = cache.find(degree);
  if (it == cache.end()) it = cache.emplace(degree, make_triangle_rule(degree)).first;
  return it->second;
}

}  // namespace earm
