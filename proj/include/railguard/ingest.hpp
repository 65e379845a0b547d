#pragma once

// Detection wire format: line-delimited JSON, one header line followed by one
// line per frame. Also hosts the frame-resampling and normalization checks
// that the detector side is expected to honour.

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "railguard/geometry.hpp"

namespace railguard {

enum class ClassLabel { track, person, object };

inline std::string_view to_string(ClassLabel c) noexcept {
  switch (c) {
    case ClassLabel::track: return "track";
    case ClassLabel::person: return "person";
    case ClassLabel::object: return "object";
  }
  return "object";
}

inline std::optional<ClassLabel> parse_class_label(std::string_view s) noexcept {
  if (s == "track") return ClassLabel::track;
  if (s == "person") return ClassLabel::person;
  if (s == "object") return ClassLabel::object;
  return std::nullopt;
}

struct Detection {
  ClassLabel class_label = ClassLabel::object;
  BoundingBox bbox;
  double confidence = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct IntensityDigest {
  double min = 0.0;
  double max = 0.0;
  friend bool operator==(const IntensityDigest&, const IntensityDigest&) = default;
};

struct FrameRecord {
  std::uint64_t frame_index = 0;
  std::uint64_t timestamp_ms = 0;
  std::vector<Detection> detections;
  std::optional<IntensityDigest> intensity_digest;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

struct StreamHeader {
  std::string source_id;
  std::uint32_t frame_width = 0;
  std::uint32_t frame_height = 0;
  double fps = 0.0;

  friend bool operator==(const StreamHeader&, const StreamHeader&) = default;
};

// ---------------------------------------------------------------------------
// Errors. Every ingest error carries the 1-based line number it refers to.

class IngestError : public std::runtime_error {
 public:
  IngestError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Not JSON, or not the expected record kind.
class ParseError : public IngestError {
 public:
  using IngestError::IngestError;
};

/// frame_index not strictly increasing or timestamp going backwards.
class OrderError : public IngestError {
 public:
  using IngestError::IngestError;
};

/// Missing/extra fields, wrong types, out-of-range values.
class SchemaError : public IngestError {
 public:
  SchemaError(std::size_t line, std::string field, const std::string& what)
      : IngestError(line, "field \"" + field + "\": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class InvalidResample : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Frame resampling and normalization.

/// Uniformly picks m_target of n_source frame indices:
/// index_k = round_half_up(k * (n - 1) / (m - 1)), and [0] when m == 1.
/// Computed in integers so every implementation agrees bit for bit.
inline std::vector<std::uint64_t> resample_indices(std::uint64_t n_source, std::uint64_t m_target) {
  if (n_source == 0 || m_target == 0) throw InvalidResample("frame counts must be positive");
  if (m_target > n_source) {
    throw InvalidResample("cannot resample " + std::to_string(n_source) + " frames up to " +
                          std::to_string(m_target));
  }
  std::vector<std::uint64_t> out;
  out.reserve(m_target);
  if (m_target == 1) {
    out.push_back(0);
    return out;
  }
  const std::uint64_t span = n_source - 1;
  const std::uint64_t steps = m_target - 1;
  for (std::uint64_t k = 0; k < m_target; ++k) {
    out.push_back((2 * k * span + steps) / (2 * steps));
  }
  return out;
}

enum class Verdict { pass, fail };

/// Pass iff every sampled intensity is already divided down into [0, 1].
template <typename Range>
Verdict check_normalization(const Range& samples) {
  bool any = false;
  for (double v : samples) {
    any = true;
    if (!(v >= 0.0 && v <= 1.0)) return Verdict::fail;
  }
  return any ? Verdict::pass : Verdict::fail;
}

inline Verdict check_normalization(const IntensityDigest& d) {
  const double v[] = {d.min, d.max};
  return check_normalization(v);
}

// ---------------------------------------------------------------------------
// Serialization.

using ojson = nlohmann::ordered_json;

inline ojson to_json(const StreamHeader& h) {
  ojson j;
  j["type"] = "header";
  j["source_id"] = h.source_id;
  j["frame_width"] = h.frame_width;
  j["frame_height"] = h.frame_height;
  j["fps"] = h.fps;
  return j;
}

inline ojson to_json(const Detection& d) {
  ojson j;
  j["class"] = std::string(to_string(d.class_label));
  j["bbox"] = ojson::array({d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2});
  j["confidence"] = d.confidence;
  return j;
}

inline ojson to_json(const FrameRecord& f) {
  ojson j;
  j["type"] = "frame";
  j["frame_index"] = f.frame_index;
  j["timestamp_ms"] = f.timestamp_ms;
  j["detections"] = ojson::array();
  for (const auto& d : f.detections) j["detections"].push_back(to_json(d));
  if (f.intensity_digest) {
    j["intensity_digest"] = ojson::array({f.intensity_digest->min, f.intensity_digest->max});
  }
  return j;
}

inline std::string write_header_line(const StreamHeader& h) { return to_json(h).dump(); }
inline std::string write_frame_line(const FrameRecord& f) { return to_json(f).dump(); }

/// Canonical wire form: header line, then one line per frame, each "\n"-terminated.
template <typename Frames>
void write_stream(std::ostream& out, const StreamHeader& header, const Frames& frames) {
  out << write_header_line(header) << '\n';
  for (const FrameRecord& f : frames) out << write_frame_line(f) << '\n';
}

template <typename Frames>
std::string write_stream(const StreamHeader& header, const Frames& frames) {
  std::string s = write_header_line(header);
  s += '\n';
  for (const FrameRecord& f : frames) {
    s += write_frame_line(f);
    s += '\n';
  }
  return s;
}

// ---------------------------------------------------------------------------
// Parsing.

namespace detail {

inline nlohmann::json parse_json_object(std::string_view line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line.begin(), line.end());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(line_no, "record must be a JSON object");
  return j;
}

inline void require_exact_keys(const nlohmann::json& j, std::initializer_list<std::string_view> required,
                               std::initializer_list<std::string_view> optional, std::size_t line_no) {
  for (auto key : required) {
    if (!j.contains(std::string(key))) throw SchemaError(line_no, std::string(key), "missing");
  }
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (auto k : required) known = known || key == k;
    for (auto k : optional) known = known || key == k;
    if (!known) throw SchemaError(line_no, key, "unexpected field");
  }
}

inline std::uint64_t get_uint(const nlohmann::json& j, const char* field, std::size_t line_no) {
  const auto& v = j.at(field);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) throw SchemaError(line_no, field, "must be non-negative");
  throw SchemaError(line_no, field, "must be an integer");
}

inline double get_finite(const nlohmann::json& v, const std::string& field, std::size_t line_no) {
  if (!v.is_number()) throw SchemaError(line_no, field, "must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw SchemaError(line_no, field, "must be finite");
  return d;
}

inline std::string record_type(const nlohmann::json& j, std::size_t line_no) {
  auto it = j.find("type");
  if (it == j.end()) throw SchemaError(line_no, "type", "missing");
  if (!it->is_string()) throw SchemaError(line_no, "type", "must be a string");
  return it->get<std::string>();
}

}  // namespace detail

inline StreamHeader parse_header_line(std::string_view line, std::size_t line_no = 1) {
  const auto j = detail::parse_json_object(line, line_no);
  if (detail::record_type(j, line_no) != "header") {
    throw ParseError(line_no, "expected a header record first");
  }
  detail::require_exact_keys(j, {"type", "source_id", "frame_width", "frame_height", "fps"}, {}, line_no);
  StreamHeader h;
  if (!j["source_id"].is_string()) throw SchemaError(line_no, "source_id", "must be a string");
  h.source_id = j["source_id"].get<std::string>();
  const auto w = detail::get_uint(j, "frame_width", line_no);
  const auto ht = detail::get_uint(j, "frame_height", line_no);
  if (w == 0 || w > UINT32_MAX) throw SchemaError(line_no, "frame_width", "must be in 1..2^32-1");
  if (ht == 0 || ht > UINT32_MAX) throw SchemaError(line_no, "frame_height", "must be in 1..2^32-1");
  h.frame_width = static_cast<std::uint32_t>(w);
  h.frame_height = static_cast<std::uint32_t>(ht);
  h.fps = detail::get_finite(j["fps"], "fps", line_no);
  if (!(h.fps > 0.0)) throw SchemaError(line_no, "fps", "must be > 0");
  return h;
}

/// Parses one frame line in isolation. Ordering is checked by FrameOrderChecker.
inline FrameRecord parse_frame_line(std::string_view line, std::size_t line_no) {
  const auto j = detail::parse_json_object(line, line_no);
  const auto type = detail::record_type(j, line_no);
  if (type != "frame") throw ParseError(line_no, "expected a frame record, got \"" + type + "\"");
  detail::require_exact_keys(j, {"type", "frame_index", "timestamp_ms", "detections"},
                             {"intensity_digest"}, line_no);
  FrameRecord f;
  f.frame_index = detail::get_uint(j, "frame_index", line_no);
  f.timestamp_ms = detail::get_uint(j, "timestamp_ms", line_no);

  const auto& dets = j["detections"];
  if (!dets.is_array()) throw SchemaError(line_no, "detections", "must be an array");
  f.detections.reserve(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& dj = dets[i];
    const std::string prefix = "detections[" + std::to_string(i) + "]";
    if (!dj.is_object()) throw SchemaError(line_no, prefix, "must be an object");
    for (auto key : {"class", "bbox", "confidence"}) {
      if (!dj.contains(key)) throw SchemaError(line_no, prefix + "." + key, "missing");
    }
    for (const auto& [key, _] : dj.items()) {
      if (key != "class" && key != "bbox" && key != "confidence") {
        throw SchemaError(line_no, prefix + "." + key, "unexpected field");
      }
    }
    Detection d;
    if (!dj["class"].is_string()) throw SchemaError(line_no, prefix + ".class", "must be a string");
    const auto label = parse_class_label(dj["class"].get<std::string>());
    if (!label) {
      throw SchemaError(line_no, prefix + ".class",
                        "unknown class \"" + dj["class"].get<std::string>() + "\"");
    }
    d.class_label = *label;

    const auto& bj = dj["bbox"];
    if (!bj.is_array() || bj.size() != 4) {
      throw SchemaError(line_no, prefix + ".bbox", "must be [x1,y1,x2,y2]");
    }
    d.bbox = BoundingBox{detail::get_finite(bj[0], prefix + ".bbox", line_no),
                         detail::get_finite(bj[1], prefix + ".bbox", line_no),
                         detail::get_finite(bj[2], prefix + ".bbox", line_no),
                         detail::get_finite(bj[3], prefix + ".bbox", line_no)};
    if (!is_valid(d.bbox)) throw SchemaError(line_no, prefix + ".bbox", "needs x1 <= x2 and y1 <= y2");

    d.confidence = detail::get_finite(dj["confidence"], prefix + ".confidence", line_no);
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
      throw SchemaError(line_no, prefix + ".confidence", "must be in [0,1]");
    }
    f.detections.push_back(d);
  }

  if (auto it = j.find("intensity_digest"); it != j.end()) {
    if (!it->is_array() || it->size() != 2) {
      throw SchemaError(line_no, "intensity_digest", "must be [min,max]");
    }
    IntensityDigest dg{detail::get_finite((*it)[0], "intensity_digest", line_no),
                       detail::get_finite((*it)[1], "intensity_digest", line_no)};
    if (dg.min > dg.max) throw SchemaError(line_no, "intensity_digest", "min exceeds max");
    f.intensity_digest = dg;
  }
  return f;
}

/// Enforces strictly increasing frame_index and non-decreasing timestamp_ms.
class FrameOrderChecker {
 public:
  void check(const FrameRecord& f, std::size_t line_no) {
    if (last_) {
      if (f.frame_index <= last_->first) {
        throw OrderError(line_no, "frame_index " + std::to_string(f.frame_index) +
                                      " does not follow " + std::to_string(last_->first));
      }
      if (f.timestamp_ms < last_->second) {
        throw OrderError(line_no, "timestamp_ms " + std::to_string(f.timestamp_ms) +
                                      " goes backwards from " + std::to_string(last_->second));
      }
    }
    last_ = {f.frame_index, f.timestamp_ms};
  }

  void reset() noexcept { last_.reset(); }

 private:
  std::optional<std::pair<std::uint64_t, std::uint64_t>> last_;
};

/// Streaming reader: the header is read on construction, frames on demand.
/// Blank lines are skipped.
class StreamReader {
 public:
  explicit StreamReader(std::istream& in) : in_(in) {
    std::string line;
    if (!next_line(line)) throw ParseError(1, "empty stream: missing header line");
    header_ = parse_header_line(line, line_no_);
  }

  const StreamHeader& header() const noexcept { return header_; }

  /// Next validated frame, or nullopt at end of input.
  std::optional<FrameRecord> next() {
    std::string line;
    if (!next_line(line)) return std::nullopt;
    FrameRecord f = parse_frame_line(line, line_no_);
    order_.check(f, line_no_);
    return f;
  }

  std::size_t line_number() const noexcept { return line_no_; }

 private:
  bool next_line(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty()) return true;
    }
    return false;
  }

  std::istream& in_;
  std::size_t line_no_ = 0;
  StreamHeader header_;
  FrameOrderChecker order_;
};

struct ParsedStream {
  StreamHeader header;
  std::vector<FrameRecord> frames;
};

/// Reads the whole stream into memory. Prefer StreamReader for long inputs.
inline ParsedStream parse_stream(std::istream& in) {
  StreamReader reader(in);
  ParsedStream out{reader.header(), {}};
  while (auto f = reader.next()) out.frames.push_back(std::move(*f));
  return out;
}

}  // namespace railguard
