// Copyright 2026 The BlindPnP Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "bpnp/error.hpp"
#include "bpnp/solvers.hpp"

namespace bpnp {

namespace {

constexpr double kImagTol = 1e-9;

double EvalQuartic(const double c[5], double x) {
  return (((c[0] * x + c[1]) * x + c[2]) * x + c[3]) * x + c[4];
}

double PolishRoot(const double c[5], double x) {
  for (int it = 0; it < 8; ++it) {
    const double f = EvalQuartic(c, x);
    const double df = ((4.0 * c[0] * x + 3.0 * c[1]) * x + 2.0 * c[2]) * x + c[3];
    if (df == 0.0) break;
    const double step = f / df;
    x -= step;
    if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

// Largest real root of m^3 + b m^2 + c m + d.
double LargestCubicRoot(double b, double c, double d) {
  const double q = (3.0 * c - b * b) / 9.0;
  const double r = (9.0 * b * c - 27.0 * d - 2.0 * b * b * b) / 54.0;
  const double disc = q * q * q + r * r;
  double m;
  if (disc >= 0.0) {
    const double s = std::cbrt(r + std::sqrt(disc));
    const double t = std::cbrt(r - std::sqrt(disc));
    m = s + t - b / 3.0;
  } else {
    const double theta = std::acos(std::clamp(r / std::sqrt(-q * q * q), -1.0, 1.0));
    m = 2.0 * std::sqrt(-q) * std::cos(theta / 3.0) - b / 3.0;
  }
  for (int it = 0; it < 6; ++it) {
    const double f = ((m + b) * m + c) * m + d;
    const double df = (3.0 * m + 2.0 * b) * m + c;
    if (df == 0.0) break;
    m -= f / df;
  }
  return m;
}

void AddQuadraticRoots(double b, double c, double shift, std::vector<double>& out) {
  // y^2 + b y + c = 0
  const double disc = b * b - 4.0 * c;
  if (disc >= 0.0) {
    const double sq = std::sqrt(disc);
    const double q = -0.5 * (b + std::copysign(sq, b));
    if (q != 0.0) {
      out.push_back(q - shift);
      out.push_back(c / q - shift);
    } else {
      out.push_back(-shift);
      out.push_back(-shift);
    }
  } else if (0.5 * std::sqrt(-disc) < kImagTol) {
    out.push_back(-0.5 * b - shift);
  }
}

std::vector<double> Ferrari(const double c[5]) {
  const double b = c[1] / c[0], cc = c[2] / c[0], d = c[3] / c[0], e = c[4] / c[0];
  // x = y - b/4: y^4 + p y^2 + q y + r
  const double b2 = b * b;
  const double p = cc - 3.0 * b2 / 8.0;
  const double q = d - b * cc / 2.0 + b2 * b / 8.0;
  const double r = e - b * d / 4.0 + b2 * cc / 16.0 - 3.0 * b2 * b2 / 256.0;
  const double shift = b / 4.0;
  std::vector<double> roots;
  if (std::abs(q) < 1e-14 * std::max({1.0, std::abs(p), std::abs(r)})) {
    // Biquadratic.
    std::vector<double> z;
    AddQuadraticRoots(p, r, 0.0, z);
    for (double zz : z) {
      if (zz >= 0.0) {
        roots.push_back(std::sqrt(zz) - shift);
        roots.push_back(-std::sqrt(zz) - shift);
      } else if (std::sqrt(-zz) < kImagTol) {
        roots.push_back(-shift);
      }
    }
    return roots;
  }
  // 8 m^3 + 8 p m^2 + (2 p^2 - 8 r) m - q^2 = 0 has a positive root.
  const double m = LargestCubicRoot(p, p * p / 4.0 - r, -q * q / 8.0);
  if (!(m > 0.0)) return {};
  const double s = std::sqrt(2.0 * m);
  const double k = q / (2.0 * s);
  // y^2 + p/2 + m = +-(s y - k)
  AddQuadraticRoots(-s, p / 2.0 + m + k, shift, roots);
  AddQuadraticRoots(s, p / 2.0 + m - k, shift, roots);
  return roots;
}

std::vector<double> Companion(const double c[5]) {
  Eigen::Matrix4d C = Eigen::Matrix4d::Zero();
  for (int i = 0; i < 4; ++i) C(0, i) = -c[i + 1] / c[0];
  for (int i = 1; i < 4; ++i) C(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::Matrix4d> es(C, false);
  std::vector<double> roots;
  for (int i = 0; i < 4; ++i) {
    const std::complex<double> z = es.eigenvalues()(i);
    if (std::abs(z.imag()) < kImagTol * std::max(1.0, std::abs(z.real()))) {
      roots.push_back(z.real());
    }
  }
  return roots;
}

// Real parts of companion eigenvalues whose imaginary part is below `tol`.
std::vector<double> NearRealRoots(const double c[5], double tol) {
  Eigen::Matrix4d C = Eigen::Matrix4d::Zero();
  for (int i = 0; i < 4; ++i) C(0, i) = -c[i + 1] / c[0];
  for (int i = 1; i < 4; ++i) C(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::Matrix4d> es(C, false);
  std::vector<double> roots;
  for (int i = 0; i < 4; ++i) {
    const std::complex<double> z = es.eigenvalues()(i);
    if (z.imag() != 0.0 && std::abs(z.imag()) < tol * std::max(1.0, std::abs(z.real()))) {
      roots.push_back(z.real());
    }
  }
  return roots;
}

double RootScale(const double c[5], double x) {
  const double ax = std::abs(x);
  double s = 0.0, pw = 1.0;
  for (int i = 4; i >= 0; --i) {
    s += std::abs(c[i]) * pw;
    pw *= ax;
  }
  return s;
}

// Rigid transform with dst = R src + t from three exact correspondences.
Pose AlignThree(const std::array<Eigen::Vector3d, 3>& src,
                const std::array<Eigen::Vector3d, 3>& dst) {
  const Eigen::Vector3d cs = (src[0] + src[1] + src[2]) / 3.0;
  const Eigen::Vector3d cd = (dst[0] + dst[1] + dst[2]) / 3.0;
  Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) S += (dst[i] - cd) * (src[i] - cs).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(S, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) D(2, 2) = -1.0;
  Pose pose;
  pose.R = svd.matrixU() * D * svd.matrixV().transpose();
  pose.t = cd - pose.R * cs;
  return pose;
}

}  // namespace

std::vector<double> SolveQuartic(double a4, double a3, double a2, double a1, double a0) {
  Require(a4 != 0.0, ErrorKind::kInvalidInput, "leading quartic coefficient is zero");
  const double c[5] = {a4, a3, a2, a1, a0};
  auto polish_all = [&](std::vector<double> r) {
    for (double& x : r) x = PolishRoot(c, x);
    return r;
  };
  auto accurate = [&](const std::vector<double>& r) {
    for (double x : r) {
      if (!std::isfinite(x) || std::abs(EvalQuartic(c, x)) > 1e-8 * RootScale(c, x)) {
        return false;
      }
    }
    return true;
  };
  std::vector<double> roots = polish_all(Ferrari(c));
  if (roots.empty() || !accurate(roots)) roots = polish_all(Companion(c));
  std::sort(roots.begin(), roots.end());
  return roots;
}

std::vector<Pose> P3PCandidates(const std::array<Eigen::Vector3d, 3>& x,
                                const std::array<Eigen::Vector3d, 3>& f) {
  const double a2 = (x[1] - x[2]).squaredNorm();
  const double b2 = (x[0] - x[2]).squaredNorm();
  const double c2 = (x[0] - x[1]).squaredNorm();
  const double area = (x[1] - x[0]).cross(x[2] - x[0]).norm();
  Require(area > 1e-12 * std::max({a2, b2, c2, 1e-300}), ErrorKind::kNoSolution,
          "P3P points are collinear");
  const Eigen::Vector3d j0 = f[0].normalized(), j1 = f[1].normalized(), j2 = f[2].normalized();
  const double ca = j1.dot(j2), cb = j0.dot(j2), cg = j0.dot(j1);

  const double amc = (a2 - c2) / b2, apc = (a2 + c2) / b2;
  const double A4 = (amc - 1.0) * (amc - 1.0) - 4.0 * c2 / b2 * ca * ca;
  const double A3 = 4.0 * (amc * (1.0 - amc) * cb - (1.0 - apc) * ca * cg +
                           2.0 * c2 / b2 * ca * ca * cb);
  const double A2 = 2.0 * (amc * amc - 1.0 + 2.0 * amc * amc * cb * cb +
                           2.0 * (b2 - c2) / b2 * ca * ca - 4.0 * apc * ca * cb * cg +
                           2.0 * (b2 - a2) / b2 * cg * cg);
  const double A1 = 4.0 * (-amc * (1.0 + amc) * cb + 2.0 * a2 / b2 * cg * cg * cb -
                           (1.0 - apc) * ca * cg);
  const double A0 = (1.0 + amc) * (1.0 + amc) - 4.0 * a2 / b2 * cg * cg;

  std::vector<double> vs;
  if (std::abs(A4) > 1e-14 * std::max({std::abs(A3), std::abs(A2), std::abs(A1), std::abs(A0)})) {
    vs = SolveQuartic(A4, A3, A2, A1, A0);
    // A double root may surface as a complex pair with a small imaginary
    // part; the distance checks below reject anything spurious.
    const double c[5] = {A4, A3, A2, A1, A0};
    for (double z : NearRealRoots(c, 1e-5)) vs.push_back(PolishRoot(c, z));
  }
  if (vs.empty()) Fail(ErrorKind::kNoSolution, "P3P quartic has no real root");

  // For each v, the b2 constraint fixes s0 and the c2 constraint leaves two
  // choices of u; the a2 constraint selects among them.
  std::vector<std::pair<double, double>> uv;
  for (double v : vs) {
    if (!(v > 0.0)) continue;
    const double s0sq = b2 / (1.0 + v * v - 2.0 * v * cb);
    if (!(s0sq > 0.0)) continue;
    const double disc = std::max(0.0, cg * cg - 1.0 + c2 / s0sq);
    for (double u : {cg + std::sqrt(disc), cg - std::sqrt(disc)}) {
      const double ra = s0sq * (u * u + v * v - 2.0 * u * v * ca) - a2;
      if (std::abs(ra) <= 1e-6 * a2) uv.emplace_back(u, v);
    }
  }

  std::vector<Pose> out;
  std::vector<Eigen::Vector3d> depths;
  for (const auto& [u, v] : uv) {
    if (!(u > 0.0)) continue;
    const double s0sq = b2 / (1.0 + v * v - 2.0 * v * cb);
    Eigen::Vector3d s(std::sqrt(s0sq), 0.0, 0.0);
    s(1) = u * s(0);
    s(2) = v * s(0);
    // Gauss-Newton on the three distance constraints.
    for (int it = 0; it < 5; ++it) {
      const Eigen::Vector3d r(s(1) * s(1) + s(2) * s(2) - 2.0 * s(1) * s(2) * ca - a2,
                              s(0) * s(0) + s(2) * s(2) - 2.0 * s(0) * s(2) * cb - b2,
                              s(0) * s(0) + s(1) * s(1) - 2.0 * s(0) * s(1) * cg - c2);
      Eigen::Matrix3d J;
      J << 0.0, 2.0 * (s(1) - s(2) * ca), 2.0 * (s(2) - s(1) * ca),
          2.0 * (s(0) - s(2) * cb), 0.0, 2.0 * (s(2) - s(0) * cb),
          2.0 * (s(0) - s(1) * cg), 2.0 * (s(1) - s(0) * cg), 0.0;
      const Eigen::Vector3d step = J.fullPivLu().solve(r);
      if (!step.allFinite()) break;
      s -= step;
      if (step.norm() <= 1e-15 * s.norm()) break;
    }
    if (!(s.minCoeff() > 0.0)) continue;
    bool seen = false;
    for (const Eigen::Vector3d& o : depths) seen |= (o - s).norm() <= 1e-9 * s.norm();
    if (seen) continue;
    depths.push_back(s);
    const std::array<Eigen::Vector3d, 3> cam = {s(0) * j0, s(1) * j1, s(2) * j2};
    Pose pose = AlignThree(x, cam);
    if (!pose.R.allFinite() || !pose.t.allFinite()) continue;
    out.push_back(pose);
  }
  if (out.size() > 4) out.resize(4);
  return out;
}

Pose P3P(const std::array<Eigen::Vector3d, 4>& x, const std::array<Eigen::Vector2d, 4>& y) {
  std::array<Eigen::Vector3d, 3> pts = {x[0], x[1], x[2]};
  std::array<Eigen::Vector3d, 3> bearings;
  for (int i = 0; i < 3; ++i) bearings[i] = Eigen::Vector3d(y[i].x(), y[i].y(), 1.0).normalized();
  const auto candidates = P3PCandidates(pts, bearings);
  if (candidates.empty()) Fail(ErrorKind::kNoSolution, "P3P produced no candidate");
  std::size_t best = 0;
  double best_res = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const Eigen::Vector3d z = candidates[c].Transform(x[3]);
    if (z.norm() == 0.0) continue;
    const double res = AngularResidual(candidates[c], x[3], y[3]);
    if (res < best_res) {
      best_res = res;
      best = c;
    }
  }
  return candidates[best];
}

}  // namespace bpnp
