#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace piezores::materials {

using Stiffness = Eigen::Matrix<double, 6, 6>;
using PiezoMatrix = Eigen::Matrix<double, 3, 6>;
using Permittivity = Eigen::Matrix3d;
using Rotation = Eigen::Matrix3d;

inline constexpr double kVacuumPermittivity = 8.8541878128e-12;

/// Elastic, piezoelectric and dielectric constants of an anisotropic crystal
/// in a given frame. Voigt order is (11, 22, 33, 23, 13, 12).
struct MaterialConstantSet {
  std::string name;
  double density = 0.0;        // kg/m^3
  Stiffness stiffness;         // c^E, Pa
  PiezoMatrix piezo;           // e, C/m^2
  Permittivity permittivity;   // eps^S, F/m

  /// Symmetry and positive definiteness of stiffness and permittivity,
  /// positive density. Throws InputError.
  void validate() const;
};

/// Rotated Y-cut: plate normal turned by theta from +Y toward +Z about X.
class CrystalCut {
 public:
  explicit CrystalCut(double theta_deg);
  double theta_deg() const noexcept { return theta_deg_; }

 private:
  double theta_deg_;  // in [0, 180)
};

enum class CouplingForm {
  literal,    // e^2 / (c eps)
  stiffened,  // e^2 / (c eps + e^2)
};

struct CouplingRow {
  double theta_deg;
  double k33_sq;
  double k35_sq;
};

/// Congruent LiNbO3, Warner, Onoe and Coquin, J. Acoust. Soc. Am. 42 (1967) 1223.
MaterialConstantSet lithium_niobate();

/// Direction cosines a_ij (rows are the new axes in old coordinates) of a
/// right-handed rotation about X by the given angle. Not normalized.
Rotation rotation_about_x(double angle_deg);

/// 6x6 Bond matrix M with T' = M T for stresses in Voigt order.
Stiffness bond_matrix(const Rotation& a);

/// Constants expressed in the frame whose axes are the rows of `a`.
MaterialConstantSet transform(const MaterialConstantSet& m, const Rotation& a);

/// Rotation about crystal X by the cut angle. Axis 2 of the result is the
/// plate normal.
MaterialConstantSet rotate_constants(const MaterialConstantSet& base, const CrystalCut& cut);

/// rotate_constants followed by the cyclic relabel (1, 2, 3) <- (3', 1', 2'),
/// so axis 3 is the plate normal and axis 1 lies in the crystal YZ plane.
/// Thickness-mode couplings are read from this frame.
MaterialConstantSet plate_frame(const MaterialConstantSet& base, const CrystalCut& cut);

/// Thickness-extensional coupling from the (3,3) entries.
double coupling_te(const MaterialConstantSet& m, CouplingForm form = CouplingForm::literal);
/// Thickness-shear coupling from e35, c55 and eps33.
double coupling_ts(const MaterialConstantSet& m, CouplingForm form = CouplingForm::literal);

/// One row per angle from theta_min to theta_max inclusive. Rows are
/// evaluated on plate_frame(base, theta).
std::vector<CouplingRow> coupling_scan(const MaterialConstantSet& base, double theta_min,
                                       double theta_max, double step,
                                       CouplingForm form = CouplingForm::literal);

/// Angles in [theta_min, theta_max] where the plate-frame e35 changes sign,
/// bracketed on a `step` grid and refined by bisection to 1e-10 degrees.
std::vector<double> ts_null_angles(const MaterialConstantSet& base, double theta_min,
                                   double theta_max, double step = 0.5);

/// Among the thickness-shear nulls in [0, 180), the one with the largest
/// thickness-extensional coupling.
std::optional<double> best_ts_null(const MaterialConstantSet& base);

}  // namespace piezores::materials
