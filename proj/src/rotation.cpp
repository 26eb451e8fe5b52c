#include "derender/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "derender/common.hpp"

namespace derender::rot {

namespace {

constexpr double kPi = std::numbers::pi;

double clamp1(double x) { return std::clamp(x, -1.0, 1.0); }

void check_finite(const Eigen::Vector3d& v, const char* what) {
    require(v.allFinite(), Errc::non_finite, std::string(what) + " contains a non-finite value");
}

// +1 for cyclic axis orders (xyz, yzx, zxy), -1 for the anticyclic ones.
int parity(const EulerOrder& o) {
    return ((o.b - o.a + 3) % 3 == 1) ? 1 : -1;
}

// Unit quaternion (w, x, y, z) with w >= 0 from a rotation matrix
// (Shepperd's method: pivot on the largest diagonal element, which keeps the
// extraction well conditioned for all angles, including near pi).
Eigen::Vector4d quat_from_matrix(const Eigen::Matrix3d& r) {
    Eigen::Vector4d q;
    double t = r.trace();
    if (t > 0.0) {
        double s = std::sqrt(t + 1.0) * 2.0;
        q << 0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s;
    } else if (r(0, 0) >= r(1, 1) && r(0, 0) >= r(2, 2)) {
        double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
        q << (r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s;
    } else if (r(1, 1) >= r(2, 2)) {
        double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
        q << (r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s;
    } else {
        double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
        q << (r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s;
    }
    q.normalize();
    if (q(0) < 0.0) q = -q;
    return q;
}

Eigen::Matrix3d quat_to_matrix(const Eigen::Vector4d& q) {
    double w = q(0), x = q(1), y = q(2), z = q(3);
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

}  // namespace

Eigen::Matrix3d axis_rotation(int axis, double angle) {
    require(axis >= 0 && axis < 3, Errc::invalid_config, "rotation axis must be 0, 1 or 2");
    require(std::isfinite(angle), Errc::non_finite, "rotation angle is not finite");
    double c = std::cos(angle), s = std::sin(angle);
    // v = axis+1, w = axis+2 (mod 3) so that (axis, v, w) is cyclic: the
    // rotation carries v towards w.
    int v = (axis + 1) % 3, w = (axis + 2) % 3;
    Eigen::Matrix3d r = Eigen::Matrix3d::Zero();
    r(axis, axis) = 1.0;
    r(v, v) = c;
    r(w, w) = c;
    r(w, v) = s;
    r(v, w) = -s;
    return r;
}

double orthonormality_error(const Eigen::Matrix3d& r) {
    double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).norm();
    return ortho + std::abs(r.determinant() - 1.0);
}

Eigen::Matrix3d euler_to_matrix(const EulerAngles& e) {
    require(e.order.valid(), Errc::invalid_config, "euler axis order must be a permutation of x, y, z");
    check_finite(e.angles, "euler angles");
    Eigen::Matrix3d ra = axis_rotation(e.order.a, e.angles(0));
    Eigen::Matrix3d rb = axis_rotation(e.order.b, e.angles(1));
    Eigen::Matrix3d rc = axis_rotation(e.order.c, e.angles(2));
    // Intrinsic (a, b, c): rotate about a, then the rotated b, then the
    // rotated c, which composes right-to-left as Ra * Rb * Rc.  Extrinsic
    // uses fixed axes and composes the other way.
    if (e.convention == EulerConvention::intrinsic) return ra * rb * rc;
    return rc * rb * ra;
}

namespace {

// Intrinsic Tait-Bryan extraction for R = Ra(alpha) * Rb(beta) * Rc(gamma).
Eigen::Vector3d intrinsic_euler(const Eigen::Matrix3d& r, const EulerOrder& o) {
    int a = o.a, b = o.b, c = o.c;
    double eps = parity(o);
    double sb = clamp1(eps * r(a, c));
    double beta = std::asin(sb);
    double alpha, gamma;
    if (std::abs(sb) < 1.0 - 1e-12) {
        alpha = std::atan2(-eps * r(b, c), r(c, c));
        gamma = std::atan2(-eps * r(a, b), r(a, a));
    } else {
        // Gimbal lock: alpha and gamma are degenerate; put the whole
        // remaining rotation into alpha and set gamma = 0, i.e. solve
        // R = Ra(alpha) * Rb(beta) exactly.
        gamma = 0.0;
        Eigen::Matrix3d ra = r * axis_rotation(b, -beta);
        int v = (a + 1) % 3, w = (a + 2) % 3;
        alpha = std::atan2(ra(w, v), ra(v, v));
    }
    return {alpha, beta, gamma};
}

}  // namespace

EulerAngles matrix_to_euler(const Eigen::Matrix3d& r, EulerConvention convention, EulerOrder order) {
    require(order.valid(), Errc::invalid_config, "euler axis order must be a permutation of x, y, z");
    EulerAngles out;
    out.convention = convention;
    out.order = order;
    if (convention == EulerConvention::intrinsic) {
        out.angles = intrinsic_euler(r, order);
    } else {
        // Extrinsic (a, b, c) with angles (alpha, beta, gamma) equals
        // intrinsic (c, b, a) with angles (gamma, beta, alpha).
        Eigen::Vector3d g = intrinsic_euler(r, EulerOrder{order.c, order.b, order.a});
        out.angles = {g(2), g(1), g(0)};
    }
    return out;
}

Eigen::Matrix3d axis_angle_to_matrix(const Eigen::Vector3d& axis, double angle) {
    check_finite(axis, "rotation axis");
    require(std::isfinite(angle), Errc::non_finite, "rotation angle is not finite");
    double n = axis.norm();
    require(std::abs(n - 1.0) <= 1e-6, Errc::non_unit_axis, "axis norm deviates from 1 by more than 1e-6");
    Eigen::Vector3d u = axis / n;
    double c = std::cos(angle), s = std::sin(angle);
    Eigen::Matrix3d k;
    k << 0, -u.z(), u.y(), u.z(), 0, -u.x(), -u.y(), u.x(), 0;
    return Eigen::Matrix3d::Identity() + s * k + (1.0 - c) * (k * k);
}

AxisAngle matrix_to_axis_angle(const Eigen::Matrix3d& r) {
    Eigen::Vector4d q = quat_from_matrix(r);
    Eigen::Vector3d v(q(1), q(2), q(3));
    double s = v.norm();
    if (s < 1e-12) return AxisAngle{};  // identity
    return AxisAngle{v / s, 2.0 * std::atan2(s, q(0))};
}

Eigen::Matrix3d rotvec_to_matrix(const Eigen::Vector3d& v) {
    check_finite(v, "rotation vector");
    double angle = v.norm();
    if (angle < 1e-12) return Eigen::Matrix3d::Identity();
    return axis_angle_to_matrix(v / angle, angle);
}

Eigen::Vector3d matrix_to_rotvec(const Eigen::Matrix3d& r) {
    AxisAngle aa = matrix_to_axis_angle(r);
    return aa.axis * aa.angle;
}

Eigen::Matrix3d sixd_to_matrix(const SixD& s) {
    check_finite(s.a1, "sixd first vector");
    check_finite(s.a2, "sixd second vector");
    double n1 = s.a1.norm();
    double n2 = s.a2.norm();
    require(n1 > 1e-12 && n2 > 1e-12, Errc::degenerate_sixd, "sixd vector has near-zero norm");
    Eigen::Vector3d b1 = s.a1 / n1;
    Eigen::Vector3d w = s.a2 - b1.dot(s.a2) * b1;
    // |w| / |a2| = sin(angle between a1 and a2); reject near-collinear pairs.
    require(w.norm() > 1e-6 * n2, Errc::degenerate_sixd, "sixd vectors are collinear within 1e-6");
    Eigen::Vector3d b2 = w / w.norm();
    Eigen::Vector3d b3 = b1.cross(b2);
    Eigen::Matrix3d r;
    r.col(0) = b1;
    r.col(1) = b2;
    r.col(2) = b3;
    return r;
}

SixD matrix_to_sixd(const Eigen::Matrix3d& r) {
    return SixD{r.col(0), r.col(1)};
}

double geodesic_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
    // Relative angle from the quaternion chords: with qa.qb >= 0,
    // |qa - qb| = 2 sin(theta/4) and |qa + qb| = 2 cos(theta/4), so
    // theta = 4 atan2(|qa - qb|, |qa + qb|).  Unlike acos((trace-1)/2),
    // which loses ~sqrt(eps) accuracy at both ends of [0, pi], this stays
    // fully accurate everywhere, and identical inputs give exactly zero:
    // the cancellation happens in plain subtractions of equal values, which
    // FP contraction (FMA) cannot perturb.
    Eigen::Vector4d qa = quat_from_matrix(a);
    Eigen::Vector4d qb = quat_from_matrix(b);
    if (qa.dot(qb) < 0.0) qb = -qb;  // q and -q are the same rotation
    return 4.0 * std::atan2((qa - qb).norm(), (qa + qb).norm()) * 180.0 / kPi;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
    Eigen::Vector4d q;
    do {
        q << rng.normal(), rng.normal(), rng.normal(), rng.normal();
    } while (q.norm() < 1e-6);
    q.normalize();
    return quat_to_matrix(q);
}

}  // namespace derender::rot
