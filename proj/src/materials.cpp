#include "piezores/materials.hpp"

#include <cmath>

#include "piezores/error.hpp"
#include "piezores/sweep.hpp"

namespace piezores::materials {

namespace {

bool symmetric(const Eigen::MatrixXd& m) {
  const double scale = m.cwiseAbs().maxCoeff();
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

bool positive_definite(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  return solver.info() == Eigen::Success && solver.eigenvalues().minCoeff() > 0.0;
}

double normalize_angle(double theta_deg) {
  double t = std::fmod(theta_deg, 180.0);
  if (t < 0.0) t += 180.0;
  if (t >= 180.0) t -= 180.0;
  return t;
}

double coupling(double e, double c, double eps, CouplingForm form) {
  const double num = e * e;
  return form == CouplingForm::literal ? num / (c * eps) : num / (c * eps + num);
}

}  // namespace

void MaterialConstantSet::validate() const {
  if (!(density > 0.0) || !std::isfinite(density)) throw InputError(name + ": density must be > 0");
  if (!stiffness.allFinite() || !piezo.allFinite() || !permittivity.allFinite()) {
    throw InputError(name + ": constants must be finite");
  }
  if (!symmetric(stiffness)) throw InputError(name + ": stiffness matrix is not symmetric");
  if (!positive_definite(stiffness)) throw InputError(name + ": stiffness matrix is not positive definite");
  if (!symmetric(permittivity)) throw InputError(name + ": permittivity matrix is not symmetric");
  if (!positive_definite(permittivity)) {
    throw InputError(name + ": permittivity matrix is not positive definite");
  }
}

CrystalCut::CrystalCut(double theta_deg) : theta_deg_(normalize_angle(theta_deg)) {
  if (!std::isfinite(theta_deg)) throw InputError("cut angle must be finite");
}

MaterialConstantSet lithium_niobate() {
  const double c11 = 2.03e11, c12 = 0.53e11, c13 = 0.75e11, c14 = 0.09e11;
  const double c33 = 2.45e11, c44 = 0.60e11, c66 = 0.5 * (c11 - c12);
  const double e15 = 3.7, e22 = 2.5, e31 = 0.2, e33 = 1.3;

  MaterialConstantSet m;
  m.name = "LiNbO3 (Warner 1967)";
  m.density = 4700.0;
  // Trigonal 3m with the mirror plane normal to X.
  m.stiffness << c11, c12, c13, c14, 0, 0,
                 c12, c11, c13, -c14, 0, 0,
                 c13, c13, c33, 0, 0, 0,
                 c14, -c14, 0, c44, 0, 0,
                 0, 0, 0, 0, c44, c14,
                 0, 0, 0, 0, c14, c66;
  m.piezo << 0, 0, 0, 0, e15, -e22,
             -e22, e22, 0, e15, 0, 0,
             e31, e31, e33, 0, 0, 0;
  m.permittivity = Eigen::Vector3d(44.0, 44.0, 29.0).asDiagonal();
  m.permittivity *= kVacuumPermittivity;
  return m;
}

Rotation rotation_about_x(double angle_deg) {
  const double t = angle_deg * kPi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  Rotation a;
  a << 1, 0, 0,
       0, c, s,
       0, -s, c;
  return a;
}

Stiffness bond_matrix(const Rotation& a) {
  // Auld's stress transformation for Voigt order (11, 22, 33, 23, 13, 12).
  constexpr int pair[6][2] = {{0, 0}, {1, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}};
  Stiffness m;
  for (int I = 0; I < 6; ++I) {
    const int i = pair[I][0], j = pair[I][1];
    for (int J = 0; J < 6; ++J) {
      const int k = pair[J][0], l = pair[J][1];
      if (J < 3) {
        m(I, J) = a(i, k) * a(j, k);
      } else {
        m(I, J) = a(i, k) * a(j, l) + a(i, l) * a(j, k);
      }
    }
  }
  return m;
}

MaterialConstantSet transform(const MaterialConstantSet& m, const Rotation& a) {
  const Stiffness bond = bond_matrix(a);
  MaterialConstantSet out;
  out.name = m.name;
  out.density = m.density;
  out.stiffness = bond * m.stiffness * bond.transpose();
  out.piezo = a * m.piezo * bond.transpose();
  out.permittivity = a * m.permittivity * a.transpose();
  // Remove rounding asymmetry so downstream symmetry checks stay exact.
  out.stiffness = 0.5 * (out.stiffness + out.stiffness.transpose()).eval();
  out.permittivity = 0.5 * (out.permittivity + out.permittivity.transpose()).eval();
  return out;
}

MaterialConstantSet rotate_constants(const MaterialConstantSet& base, const CrystalCut& cut) {
  return transform(base, rotation_about_x(cut.theta_deg()));
}

MaterialConstantSet plate_frame(const MaterialConstantSet& base, const CrystalCut& cut) {
  Rotation relabel;
  relabel << 0, 0, 1,
             1, 0, 0,
             0, 1, 0;
  return transform(base, relabel * rotation_about_x(cut.theta_deg()));
}

double coupling_te(const MaterialConstantSet& m, CouplingForm form) {
  return coupling(m.piezo(2, 2), m.stiffness(2, 2), m.permittivity(2, 2), form);
}

double coupling_ts(const MaterialConstantSet& m, CouplingForm form) {
  return coupling(m.piezo(2, 4), m.stiffness(4, 4), m.permittivity(2, 2), form);
}

std::vector<CouplingRow> coupling_scan(const MaterialConstantSet& base, double theta_min,
                                       double theta_max, double step, CouplingForm form) {
  if (!(theta_min < theta_max)) throw InputError("empty scan range: theta_min must be < theta_max");
  if (!(step > 0.0)) throw InputError("scan step must be positive");
  base.validate();

  const auto count = static_cast<std::size_t>(std::floor((theta_max - theta_min) / step + 1e-9)) + 1;
  std::vector<CouplingRow> rows;
  rows.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double theta = theta_min + step * static_cast<double>(k);
    const MaterialConstantSet m = plate_frame(base, CrystalCut(theta));
    rows.push_back({theta, coupling_te(m, form), coupling_ts(m, form)});
  }
  return rows;
}

std::vector<double> ts_null_angles(const MaterialConstantSet& base, double theta_min,
                                   double theta_max, double step) {
  if (!(theta_min < theta_max) || !(step > 0.0)) throw InputError("invalid null search range");
  auto e35 = [&](double theta) { return plate_frame(base, CrystalCut(theta)).piezo(2, 4); };

  std::vector<double> nulls;
  double lo = theta_min;
  double f_lo = e35(lo);
  while (lo < theta_max) {
    const double hi = std::min(lo + step, theta_max);
    const double f_hi = e35(hi);
    if (f_lo == 0.0) {
      nulls.push_back(lo);
    } else if (f_lo * f_hi < 0.0) {
      double a = lo, b = hi, fa = f_lo;
      while (b - a > 1e-10) {
        const double mid = 0.5 * (a + b);
        const double fm = e35(mid);
        if (fa * fm <= 0.0) {
          b = mid;
        } else {
          a = mid;
          fa = fm;
        }
      }
      nulls.push_back(0.5 * (a + b));
    }
    lo = hi;
    f_lo = f_hi;
  }
  return nulls;
}

std::optional<double> best_ts_null(const MaterialConstantSet& base) {
  std::optional<double> best;
  double best_k33 = -1.0;
  for (double theta : ts_null_angles(base, 0.0, 179.999, 0.5)) {
    const double k33 = coupling_te(plate_frame(base, CrystalCut(theta)));
    if (k33 > best_k33) {
      best_k33 = k33;
      best = theta;
    }
  }
  return best;
}

}  // namespace piezores::materials
