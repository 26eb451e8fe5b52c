#pragma once

// Rotation representations and conversions: Tait-Bryan Euler angles
// (intrinsic and extrinsic), axis-angle, the 6D Gram-Schmidt parameterisation,
// and geodesic distance.  All conversions go through 3x3 matrices.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <utility>

#include "derender/rng.hpp"

namespace derender::rot {

enum class EulerConvention { intrinsic, extrinsic };

// Axis order as indices into {0:x, 1:y, 2:z}; all three must be distinct
// (Tait-Bryan).  order = {0,1,2} with convention extrinsic means
// R = Rz(c) * Ry(b) * Rx(a) applied to column vectors, i.e. rotate about the
// fixed x axis first.
struct EulerOrder {
    int a = 0, b = 1, c = 2;
    bool valid() const { return a != b && b != c && a != c && a >= 0 && a < 3 && b >= 0 && b < 3 && c >= 0 && c < 3; }
};

struct EulerAngles {
    Eigen::Vector3d angles{0, 0, 0};  // radians, matched to order (a, b, c)
    EulerConvention convention = EulerConvention::extrinsic;
    EulerOrder order{};
};

// First two columns of the rotation matrix (Zhou et al. continuity
// parameterisation).  a1 ~ column 0, a2 ~ column 1 before orthonormalisation.
struct SixD {
    Eigen::Vector3d a1{1, 0, 0};
    Eigen::Vector3d a2{0, 1, 0};

    std::array<double, 6> flat() const { return {a1.x(), a1.y(), a1.z(), a2.x(), a2.y(), a2.z()}; }
};

struct AxisAngle {
    Eigen::Vector3d axis{1, 0, 0};  // unit
    double angle = 0.0;             // radians, in [0, pi]
};

// Elementary rotation about coordinate axis 0/1/2.
Eigen::Matrix3d axis_rotation(int axis, double angle);

// Validation helper: Frobenius distance of r^T r from identity plus |det-1|.
double orthonormality_error(const Eigen::Matrix3d& r);

Eigen::Matrix3d euler_to_matrix(const EulerAngles& e);
EulerAngles matrix_to_euler(const Eigen::Matrix3d& r, EulerConvention convention, EulerOrder order = {});

Eigen::Matrix3d axis_angle_to_matrix(const Eigen::Vector3d& axis, double angle);
AxisAngle matrix_to_axis_angle(const Eigen::Matrix3d& r);

// Scaled-axis ("rotation vector") form used for serialisation: axis * angle.
Eigen::Matrix3d rotvec_to_matrix(const Eigen::Vector3d& v);
Eigen::Vector3d matrix_to_rotvec(const Eigen::Matrix3d& r);

Eigen::Matrix3d sixd_to_matrix(const SixD& s);
SixD matrix_to_sixd(const Eigen::Matrix3d& r);

// Relative rotation angle in degrees, in [0, 180].
double geodesic_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

// Uniform random rotation (via a random unit quaternion).
Eigen::Matrix3d random_rotation(Rng& rng);

}  // namespace derender::rot
