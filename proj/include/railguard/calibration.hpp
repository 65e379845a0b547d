#pragma once

// Pixel to ground-plane (meters) mapping. Either a fixed meters-per-pixel
// scale or a 3x3 homography from homogeneous image coordinates to meters.

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>

#include <json.hpp>

#include "railguard/geometry.hpp"

namespace railguard {

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed calibration document.
class CalibrationParseError : public CalibrationError {
 public:
  using CalibrationError::CalibrationError;
};

/// Well-formed document whose values break an invariant.
class InvalidCalibration : public CalibrationError {
 public:
  using CalibrationError::CalibrationError;
};

/// The point sits on or above the vanishing line; it has no ground position.
class HorizonError : public CalibrationError {
 public:
  using CalibrationError::CalibrationError;
};

inline constexpr double kHorizonTolerance = 1e-9;
inline constexpr double kSingularTolerance = 1e-12;

using Matrix3 = std::array<std::array<double, 3>, 3>;

inline constexpr Matrix3 identity_matrix() {
  return Matrix3{{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
}

inline double determinant(const Matrix3& m) noexcept {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

inline Matrix3 multiply(const Matrix3& a, const Matrix3& b) noexcept {
  Matrix3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

/// Adjugate over determinant. Caller guarantees |det| > kSingularTolerance.
inline Matrix3 inverse(const Matrix3& m) {
  const double det = determinant(m);
  if (!(std::abs(det) > kSingularTolerance)) {
    throw InvalidCalibration("homography matrix is singular");
  }
  Matrix3 r{};
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return r;
}

/// Applies m to (p.x, p.y, 1) and dehomogenizes.
inline Point apply_homography(const Matrix3& m, const Point& p) {
  const double xs = m[0][0] * p.x + m[0][1] * p.y + m[0][2];
  const double ys = m[1][0] * p.x + m[1][1] * p.y + m[1][2];
  const double ws = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
  if (!(std::abs(ws) > kHorizonTolerance)) {
    throw HorizonError("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                       ") maps to the line at infinity");
  }
  return Point{xs / ws, ys / ws};
}

struct ScalarCalibration {
  double meters_per_pixel = 1.0;
  friend bool operator==(const ScalarCalibration&, const ScalarCalibration&) = default;
};

struct HomographyCalibration {
  Matrix3 matrix = identity_matrix();
  friend bool operator==(const HomographyCalibration&, const HomographyCalibration&) = default;
};

class Calibration {
 public:
  /// Pixel units read as meters; what the engine uses when no file is given.
  Calibration() : Calibration(ScalarCalibration{1.0}) {}

  Calibration(ScalarCalibration s) : model_(s) {
    if (!std::isfinite(s.meters_per_pixel) || !(s.meters_per_pixel > 0.0)) {
      throw InvalidCalibration("meters_per_pixel must be finite and > 0");
    }
  }

  Calibration(HomographyCalibration h) : model_(h) {
    for (const auto& row : h.matrix)
      for (double v : row)
        if (!std::isfinite(v)) throw InvalidCalibration("homography entries must be finite");
    if (!(std::abs(determinant(h.matrix)) > kSingularTolerance)) {
      throw InvalidCalibration("homography matrix is singular");
    }
  }

  static Calibration scalar(double meters_per_pixel) {
    return Calibration(ScalarCalibration{meters_per_pixel});
  }
  static Calibration homography(const Matrix3& m) { return Calibration(HomographyCalibration{m}); }

  bool is_scalar() const noexcept { return std::holds_alternative<ScalarCalibration>(model_); }
  const ScalarCalibration* as_scalar() const noexcept { return std::get_if<ScalarCalibration>(&model_); }
  const HomographyCalibration* as_homography() const noexcept {
    return std::get_if<HomographyCalibration>(&model_);
  }

  /// Pixel -> ground meters. Throws HorizonError for homographies when |w'| <= 1e-9.
  Point project_to_ground(const Point& p) const {
    if (const auto* s = as_scalar()) {
      return Point{p.x * s->meters_per_pixel, p.y * s->meters_per_pixel};
    }
    return apply_homography(std::get<HomographyCalibration>(model_).matrix, p);
  }

  /// Ground meters -> pixel; the inverse of project_to_ground.
  Point project_to_image(const Point& g) const {
    if (const auto* s = as_scalar()) {
      return Point{g.x / s->meters_per_pixel, g.y / s->meters_per_pixel};
    }
    return apply_homography(inverse(std::get<HomographyCalibration>(model_).matrix), g);
  }

  double metric_distance(const Point& a, const Point& b) const {
    return euclidean_distance(project_to_ground(a), project_to_ground(b));
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    if (const auto* s = as_scalar()) {
      j["type"] = "scalar";
      j["meters_per_pixel"] = s->meters_per_pixel;
    } else {
      j["type"] = "homography";
      const auto& m = as_homography()->matrix;
      j["matrix"] = {{m[0][0], m[0][1], m[0][2]}, {m[1][0], m[1][1], m[1][2]},
                     {m[2][0], m[2][1], m[2][2]}};
    }
    return j;
  }

  friend bool operator==(const Calibration&, const Calibration&) = default;

 private:
  std::variant<ScalarCalibration, HomographyCalibration> model_;
};

inline Point project_to_ground(const Calibration& c, const Point& p) {
  return c.project_to_ground(p);
}

inline double metric_distance(const Calibration& c, const Point& a, const Point& b) {
  return c.metric_distance(a, b);
}

/// Builds a Calibration from an already-parsed JSON value. Unknown fields are rejected.
inline Calibration calibration_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw CalibrationParseError("calibration must be a JSON object");
  auto type_it = doc.find("type");
  if (type_it == doc.end() || !type_it->is_string()) {
    throw CalibrationParseError("calibration needs a string \"type\" field");
  }
  const std::string type = type_it->get<std::string>();
  if (type == "scalar") {
    for (const auto& [key, _] : doc.items()) {
      if (key != "type" && key != "meters_per_pixel") {
        throw CalibrationParseError("unknown calibration field \"" + key + "\"");
      }
    }
    auto it = doc.find("meters_per_pixel");
    if (it == doc.end() || !it->is_number()) {
      throw CalibrationParseError("scalar calibration needs numeric \"meters_per_pixel\"");
    }
    return Calibration::scalar(it->get<double>());
  }
  if (type == "homography") {
    for (const auto& [key, _] : doc.items()) {
      if (key != "type" && key != "matrix") {
        throw CalibrationParseError("unknown calibration field \"" + key + "\"");
      }
    }
    auto it = doc.find("matrix");
    if (it == doc.end() || !it->is_array() || it->size() != 3) {
      throw CalibrationParseError("homography calibration needs a 3x3 \"matrix\"");
    }
    Matrix3 m{};
    for (std::size_t r = 0; r < 3; ++r) {
      const auto& row = (*it)[r];
      if (!row.is_array() || row.size() != 3) {
        throw CalibrationParseError("homography matrix rows must have 3 entries");
      }
      for (std::size_t c = 0; c < 3; ++c) {
        if (!row[c].is_number()) throw CalibrationParseError("homography entries must be numbers");
        m[r][c] = row[c].get<double>();
      }
    }
    return Calibration::homography(m);
  }
  throw CalibrationParseError("unknown calibration type \"" + type + "\"");
}

inline Calibration parse_calibration(const std::string& document) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw CalibrationParseError(std::string("calibration is not valid JSON: ") + e.what());
  }
  return calibration_from_json(doc);
}

inline Calibration load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CalibrationParseError("cannot read calibration file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_calibration(buf.str());
}

}  // namespace railguard
