#pragma once

// Text formats: the PlqDocument JSON layout and CSV sampling.
//
// A document looks like
//
//   {
//     "format_version": "plq/1",
//     "breakpoints": ["-inf", 1, 2.5, 6, "inf"],
//     "coefficients": [
//       [0.5, 0, 1],
//       ...
//     ],
//     "metadata": {...}
//   }
//
// with one piece [a, b, c] per line. The writer is deterministic so that
// write -> parse -> write reproduces the same bytes.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "plqkit/plq.hpp"

namespace plqkit {

inline constexpr const char* kFormatVersion = "plq/1";

struct PlqDocument {
  PlqFunction function;
  /// Free-form object carried through untouched.
  nlohmann::json metadata = nlohmann::json::object();
};

namespace detail {

/// Shortest round-trip spelling is not required; 17 significant digits
/// always parse back to the same double. Negative zero is written as 0.
inline std::string format_double(double x) {
  if (x == 0.0) x = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string format_ext(const ExtReal& x) {
  if (x.is_neg_inf()) return "\"-inf\"";
  if (x.is_pos_inf()) return "\"inf\"";
  return format_double(x.value());
}

[[noreturn]] inline void malformed(const std::string& locus, const std::string& why) {
  throw Error(ErrorCode::MalformedDocument, locus + ": " + why, std::nullopt, std::nan(""), locus);
}

inline double number_at(const nlohmann::json& v, const std::string& locus) {
  if (!v.is_number()) malformed(locus, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) malformed(locus, "number out of range");
  return x;
}

/// JSON pointer of the field a validation error refers to.
inline std::string locus_of(const Error& e) {
  switch (e.code()) {
    case ErrorCode::NonFiniteValue:
      return e.index() ? "/coefficients/" + std::to_string(*e.index()) : "/coefficients";
    case ErrorCode::LengthMismatch:
      return "/coefficients";
    default:
      return e.index() ? "/breakpoints/" + std::to_string(*e.index()) : "/breakpoints";
  }
}

}  // namespace detail

/// Serializes a document. Metadata keys come out sorted.
inline std::string write_plq(const PlqDocument& doc) {
  const PlqFunction& f = doc.function;
  std::string s = "{\n  \"format_version\": \"";
  s += kFormatVersion;
  s += "\",\n  \"breakpoints\": [";
  for (std::size_t i = 0; i < f.breakpoints().size(); ++i) {
    if (i) s += ", ";
    s += detail::format_ext(f.breakpoint(i));
  }
  s += "],\n  \"coefficients\": [\n";
  for (std::size_t i = 0; i < f.size(); ++i) {
    const QuadCoeffs& p = f.piece(i);
    s += "    [" + detail::format_double(p.a) + ", " + detail::format_double(p.b) + ", " +
         detail::format_double(p.c) + "]";
    s += i + 1 < f.size() ? ",\n" : "\n";
  }
  s += "  ]";
  if (!doc.metadata.empty()) {
    s += ",\n  \"metadata\": " + doc.metadata.dump();
  }
  s += "\n}\n";
  return s;
}

inline std::string write_plq(const PlqFunction& f) { return write_plq(PlqDocument{f, nlohmann::json::object()}); }

/// Parses a document. Structural problems raise MalformedDocument; invalid
/// functions keep the validate_plq code. Either way locus() is a JSON
/// pointer to the offending field. Interior jumps above `continuity_tol`
/// are rejected (pass kNoContinuityCheck to accept them).
inline PlqDocument parse_plq(const std::string& text, double continuity_tol = kContinuityTol) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    detail::malformed("", std::string("not valid JSON (") + e.what() + ")");
  }
  if (!j.is_object()) detail::malformed("", "top level must be an object");
  if (!j.contains("format_version")) detail::malformed("/format_version", "missing");
  if (j["format_version"] != kFormatVersion) {
    detail::malformed("/format_version", std::string("expected \"") + kFormatVersion + "\"");
  }
  for (const auto& [key, value] : j.items()) {
    if (key != "format_version" && key != "breakpoints" && key != "coefficients" && key != "metadata") {
      detail::malformed("/" + key, "unknown field");
    }
  }
  if (!j.contains("breakpoints") || !j["breakpoints"].is_array()) {
    detail::malformed("/breakpoints", "missing or not an array");
  }
  if (!j.contains("coefficients") || !j["coefficients"].is_array()) {
    detail::malformed("/coefficients", "missing or not an array");
  }

  std::vector<ExtReal> bps;
  const auto& jb = j["breakpoints"];
  for (std::size_t i = 0; i < jb.size(); ++i) {
    const std::string locus = "/breakpoints/" + std::to_string(i);
    const auto& v = jb[i];
    if (v.is_string()) {
      const auto tok = v.get<std::string>();
      if (tok == "-inf") {
        bps.push_back(ExtReal::neg_inf());
      } else if (tok == "inf") {
        bps.push_back(ExtReal::pos_inf());
      } else {
        detail::malformed(locus, "string breakpoints must be \"-inf\" or \"inf\"");
      }
    } else {
      bps.emplace_back(detail::number_at(v, locus));
    }
  }
  std::vector<QuadCoeffs> pcs;
  const auto& jc = j["coefficients"];
  for (std::size_t i = 0; i < jc.size(); ++i) {
    const std::string locus = "/coefficients/" + std::to_string(i);
    if (!jc[i].is_array() || jc[i].size() != 3) detail::malformed(locus, "expected [a, b, c]");
    pcs.push_back({detail::number_at(jc[i][0], locus + "/0"), detail::number_at(jc[i][1], locus + "/1"),
                   detail::number_at(jc[i][2], locus + "/2")});
  }

  PlqDocument doc{[&] {
    try {
      return validate_plq(std::move(bps), std::move(pcs), continuity_tol);
    } catch (const Error& e) {
      throw Error(e.code(), e.message(), e.index(), e.magnitude(), detail::locus_of(e));
    }
  }()};
  if (j.contains("metadata")) {
    if (!j["metadata"].is_object()) detail::malformed("/metadata", "must be an object");
    doc.metadata = j["metadata"];
  }
  return doc;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + path + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot open " + path + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::InvalidArgument, "write to " + path + " failed");
}

inline PlqDocument parse_plq_file(const std::string& path, double continuity_tol = kContinuityTol) {
  return parse_plq(read_text_file(path), continuity_tol);
}

inline void write_plq_file(const PlqDocument& doc, const std::string& path) {
  write_text_file(path, write_plq(doc));
}

inline void write_plq_file(const PlqFunction& f, const std::string& path) {
  write_text_file(path, write_plq(f));
}

/// `count` equally spaced samples of f on [lo, hi] as CSV with header
/// "x,f". Points outside the domain get the value token "inf".
inline std::string sample_csv(const PlqFunction& f, double lo, double hi, int count) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    throw Error(ErrorCode::BadRange, "sampling range needs finite lo < hi");
  }
  if (count < 2) throw Error(ErrorCode::BadRange, "sampling needs at least 2 points");
  std::string s = "x,f\n";
  for (int k = 0; k < count; ++k) {
    const double x = k + 1 == count ? hi : lo + (hi - lo) * k / (count - 1);
    const ExtReal y = eval(f, x);
    s += detail::format_double(x) + "," + (y.is_finite() ? detail::format_double(y.value()) : "inf") + "\n";
  }
  return s;
}

}  // namespace plqkit
