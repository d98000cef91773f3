#pragma once

// Dataset files.
//
//   <base>.bin        contaminated matrix X~, d x n, column-major float64 little-endian
//   <base>.clean.bin  clean matrix X, same layout (optional)
//   <base>.truth.bin  spike basis U, d x r, same layout (optional)
//   <base>.meta       one key=value pair per line
//
// Required meta keys: format (= mspca-dataset-1), d, n. Written by
// write_dataset in addition: seed, r, k, ells, weights, magnitudes,
// thetas_sq, files. List values are comma-separated.

#include <Eigen/Dense>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mspca/error.hpp"
#include "mspca/simulate.hpp"
#include "mspca/spectral.hpp"

namespace mspca {

inline constexpr const char* kDatasetFormat = "mspca-dataset-1";

namespace detail {

inline std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return __builtin_bswap64(v);
  }
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::ostringstream s;
  s.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
  return s.str();
}

}  // namespace detail

inline void write_matrix_bin(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  std::vector<std::uint64_t> buf(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    buf[static_cast<std::size_t>(i)] = detail::to_little(std::bit_cast<std::uint64_t>(m.data()[i]));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
  if (!os) throw DataError("failed writing " + path.string());
}

inline Eigen::MatrixXd read_matrix_bin(const std::filesystem::path& path, Eigen::Index rows,
                                       Eigen::Index cols) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw DataError("cannot read " + path.string());
  const auto expected = static_cast<std::uintmax_t>(rows) * static_cast<std::uintmax_t>(cols) * 8U;
  if (size != expected) {
    throw DataError(path.string() + " has " + std::to_string(size) + " bytes, expected " +
                    std::to_string(expected));
  }
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<std::uint64_t> buf(static_cast<std::size_t>(rows * cols));
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
  if (!is) throw DataError("short read on " + path.string());
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < buf.size(); ++i) m.data()[i] = std::bit_cast<double>(detail::to_little(buf[i]));
  return m;
}

using MetaMap = std::map<std::string, std::string>;

inline void write_meta(const std::filesystem::path& path, const MetaMap& meta) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  for (const auto& [k, v] : meta) os << k << '=' << v << '\n';
  if (!os) throw DataError("failed writing " + path.string());
}

inline MetaMap read_meta(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  MetaMap meta;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("malformed meta line: " + line);
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

inline std::filesystem::path with_suffix(const std::filesystem::path& base, const std::string& suffix) {
  return std::filesystem::path(base.string() + suffix);
}

/// Writes X~, X, U and the metadata of `ds` under `base`.
inline void write_dataset(const std::filesystem::path& base, const Dataset& ds) {
  const auto& a = ds.contamination;
  MetaMap meta;
  meta["format"] = kDatasetFormat;
  meta["d"] = std::to_string(ds.X_tilde.dim());
  meta["n"] = std::to_string(ds.X_tilde.samples());
  meta["seed"] = std::to_string(ds.seed);
  meta["r"] = std::to_string(ds.truth_U.cols());
  meta["k"] = std::to_string(a.k());
  meta["ells"] = detail::join_doubles(ds.ells);
  std::vector<double> w, mags;
  for (Eigen::Index i = 0; i < a.k(); ++i) {
    w.push_back(a.weights(i));
    mags.push_back(a.means.col(i).norm());
  }
  meta["weights"] = detail::join_doubles(w);
  meta["magnitudes"] = detail::join_doubles(mags);
  meta["thetas_sq"] = detail::join_doubles(a.thetas_sq());
  meta["files"] = "bin,clean.bin,truth.bin";
  write_matrix_bin(with_suffix(base, ".bin"), ds.X_tilde.values());
  write_matrix_bin(with_suffix(base, ".clean.bin"), ds.X.values());
  write_matrix_bin(with_suffix(base, ".truth.bin"), ds.truth_U);
  write_meta(with_suffix(base, ".meta"), meta);
}

/// Writes a bare data matrix with minimal metadata.
inline void write_data_matrix(const std::filesystem::path& base, const DataMatrix& x) {
  MetaMap meta{{"format", kDatasetFormat},
               {"d", std::to_string(x.dim())},
               {"n", std::to_string(x.samples())},
               {"files", "bin"}};
  write_matrix_bin(with_suffix(base, ".bin"), x.values());
  write_meta(with_suffix(base, ".meta"), meta);
}

struct LoadedDataset {
  MetaMap meta;
  DataMatrix X_tilde;
  std::optional<DataMatrix> X;
  std::optional<Eigen::MatrixXd> truth_U;
};

inline Eigen::Index meta_index(const MetaMap& meta, const std::string& key) {
  const auto it = meta.find(key);
  if (it == meta.end()) throw DataError("meta is missing '" + key + "'");
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(it->second, &pos);
    if (pos != it->second.size() || v < 0) throw std::invalid_argument("bad");
    return static_cast<Eigen::Index>(v);
  } catch (const std::logic_error&) {
    throw DataError("meta key '" + key + "' is not a non-negative integer");
  }
}

/// Reads `base`.meta and `base`.bin, plus the clean and truth matrices when present.
inline LoadedDataset read_dataset(const std::filesystem::path& base) {
  auto meta = read_meta(with_suffix(base, ".meta"));
  if (meta["format"] != kDatasetFormat) throw DataError("unsupported dataset format '" + meta["format"] + "'");
  const auto d = meta_index(meta, "d");
  const auto n = meta_index(meta, "n");
  if (d < 1 || n < 1) throw DataError("dataset dimensions must be positive");
  LoadedDataset out{meta, DataMatrix(read_matrix_bin(with_suffix(base, ".bin"), d, n)), std::nullopt,
                    std::nullopt};
  if (std::filesystem::exists(with_suffix(base, ".clean.bin"))) {
    out.X.emplace(read_matrix_bin(with_suffix(base, ".clean.bin"), d, n));
  }
  if (std::filesystem::exists(with_suffix(base, ".truth.bin")) && meta.count("r")) {
    out.truth_U = read_matrix_bin(with_suffix(base, ".truth.bin"), d, meta_index(meta, "r"));
  }
  return out;
}

}  // namespace mspca
