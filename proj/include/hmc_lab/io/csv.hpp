#pragma once

// Minimal CSV output. Floats are written with %.17g so every value
// round-trips; rows end in '\n' regardless of platform.

#include "hmc_lab/core.hpp"

#include <cstdint>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

namespace hmc_lab::csv {

inline std::string cell(double x) { return format_double(x); }
inline std::string cell(const std::string& s) { return s; }
inline std::string cell(const char* s) { return s; }
inline std::string cell(bool b) { return b ? "1" : "0"; }

template <typename T>
  requires std::is_integral_v<T>
std::string cell(T x) {
  return std::to_string(x);
}

class Writer {
public:
  Writer(const std::string& path, const std::vector<std::string>& header)
      : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_) throw Error("cannot write '" + path + "'");
    write_fields(header);
  }

  template <typename... Ts>
  void row(const Ts&... xs) {
    write_fields({cell(xs)...});
  }

  void row_fields(const std::vector<std::string>& fields) { write_fields(fields); }

  const std::string& path() const { return path_; }

private:
  void write_fields(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
    if (!out_) throw Error("write failed for '" + path_ + "'");
  }

  std::ofstream out_;
  std::string path_;
};

/// Header names q_0..q_{d-1} (or another prefix).
inline std::vector<std::string> indexed(const std::string& prefix, long d) {
  std::vector<std::string> out;
  for (long i = 0; i < d; ++i) out.push_back(prefix + "_" + std::to_string(i));
  return out;
}

inline void append(std::vector<std::string>& fields, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) fields.push_back(cell(v[i]));
}

}  // namespace hmc_lab::csv
