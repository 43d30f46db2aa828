#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "lrsaddle/common.hpp"
#include "lrsaddle/config.hpp"
#include "lrsaddle/oracle.hpp"
#include "lrsaddle/saddle.hpp"
#include "lrsaddle/spectral.hpp"

namespace lrsaddle {

using json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV with a header row; numbers printed round-trip exact.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> columns)
      : path_(path), columns_(std::move(columns)), out_(path, std::ios::binary) {
    if (!out_) throw ConfigError("cannot write '" + path.string() + "'");
    for (std::size_t k = 0; k < columns_.size(); ++k) out_ << (k ? "," : "") << columns_[k];
    out_ << '\n';
  }

  void row(const std::vector<double>& values) {
    if (values.size() != columns_.size()) throw DomainError("CsvWriter: row width mismatch");
    for (std::size_t k = 0; k < values.size(); ++k) out_ << (k ? "," : "") << format_double(values[k]);
    out_ << '\n';
  }

  const std::filesystem::path& path() const { return path_; }
  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::filesystem::path path_;
  std::vector<std::string> columns_;
  std::ofstream out_;
};

/// Non-finite values become strings so the output stays valid JSON.
inline json number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

inline json vector_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(number(v(k)));
  return a;
}

inline json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

inline json to_json(const SaddleSolution& s) {
  return {{"u_bar", vector_json(s.u_bar)},
          {"phi", number(s.phi_value)},
          {"phi_scaled", s.phi_scaled},
          {"hessian_eigs", vector_json(s.hessian_eigs)},
          {"mode", to_string(s.mode)},
          {"status", to_string(s.status)},
          {"iterations", s.iterations},
          {"gradient_norm", number(s.gradient_norm)}};
}

inline json to_json(const EDResult& r) {
  json e = json::array();
  for (double v : r.energies) e.push_back(number(v));
  json out = {{"N", r.N},
              {"energies", e},
              {"lnZ", number(r.lnZ)},
              {"f_per_site", number(r.f_per_site)},
              {"diagonal_offset", number(r.diagonal_offset)}};
  if (r.m.size()) out["m"] = vector_json(r.m);
  if (r.chi_kubo.size()) out["chi_kubo"] = matrix_json(r.chi_kubo);
  return out;
}

inline json spectral_summary(const SpectralData& s) {
  return {{"N", s.N()}, {"M", s.M}, {"trace_ratio", number(s.trace_ratio)}, {"D", vector_json(s.D)}};
}

inline json solver_json(const SolverSettings& s) {
  return {{"grad_tol", s.grad_tol},
          {"max_iter", s.max_iter},
          {"init_scale", s.init_scale},
          {"hessian_step", s.hessian_step},
          {"max_escapes", s.max_escapes}};
}

/// Git blob id of `content`: SHA-1 over "blob <size>\0" + content.
inline std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw ResourceError("git_blob_hash: EVP_MD_CTX_new failed");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw ResourceError("git_blob_hash: SHA-1 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned k = 0; k < len; ++k) {
    out += hex[digest[k] >> 4];
    out += hex[digest[k] & 15];
  }
  return out;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

struct OutputFile {
  std::string name;
  std::vector<std::string> columns;
};

inline json manifest(const RunConfig& cfg, Task task, const std::vector<OutputFile>& files) {
  json entries = json::object();
  for (const auto& [k, v] : cfg.entries) entries[k] = v;
  json list = json::array();
  for (const auto& f : files) list.push_back({{"file", f.name}, {"columns", f.columns}});
  return {{"task", to_string(task)},
          {"config_hash", git_blob_hash(cfg.source)},
          {"config", entries},
          {"solver", solver_json(cfg.solver)},
          {"truncation", {{"delta", cfg.truncation.delta}, {"target_M", cfg.truncation.target_M}}},
          {"files", list}};
}

}  // namespace lrsaddle
