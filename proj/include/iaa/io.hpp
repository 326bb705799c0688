#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "iaa/core.hpp"

namespace iaa {

enum class FileFormat { binary, csv };

/// ".csv" selects CSV; everything else is the IAAD binary dump.
inline FileFormat format_from_path(const std::filesystem::path &p) {
  return p.extension() == ".csv" ? FileFormat::csv : FileFormat::binary;
}

namespace detail {

template <typename T> void put_le(std::ostream &os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char *>(bytes.data()), sizeof(T));
}

template <typename T> T get_le(std::istream &is, const char *what) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!is.read(reinterpret_cast<char *>(bytes.data()), sizeof(T)))
    throw DataError(std::string("truncated file while reading ") + what);
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline double parse_double(std::string_view s, std::size_t line) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw DataError("line " + std::to_string(line) + ": cannot parse '" + std::string(s) + "'");
  return v;
}

} // namespace detail

inline constexpr std::array<char, 4> kDatasetMagic{'I', 'A', 'A', 'D'};
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void write_binary(std::ostream &os, const Dataset &d) {
  os.write(kDatasetMagic.data(), kDatasetMagic.size());
  detail::put_le<std::uint32_t>(os, kDatasetVersion);
  detail::put_le<std::uint64_t>(os, d.size());
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d.dim()));
  const auto &e = d.embeddings();
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < e.cols(); ++j)
      detail::put_le<float>(os, static_cast<float>(e(i, j)));
  for (auto raw : d.raw_labels()) {
    if (raw < 0 || raw > std::numeric_limits<std::uint32_t>::max())
      throw DataError("label " + std::to_string(raw) + " does not fit the u32 label field");
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(raw));
  }
}

inline Dataset read_binary(std::istream &is, std::string name = {}) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()))
    throw DataError("truncated file while reading magic");
  if (magic != kDatasetMagic)
    throw DataError("bad magic: not an IAAD dump");
  const auto version = detail::get_le<std::uint32_t>(is, "version");
  if (version != kDatasetVersion)
    throw DataError("unsupported IAAD version " + std::to_string(version));
  const auto n = detail::get_le<std::uint64_t>(is, "sample count");
  const auto dim = detail::get_le<std::uint32_t>(is, "dimension");
  if (n == 0 || dim == 0)
    throw DataError("IAAD header declares an empty dataset");
  if (n > (std::uint64_t{1} << 40) / dim)
    throw DataError("IAAD header declares an implausible size");

  RowMatrix e(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < e.cols(); ++j) {
      const float v = detail::get_le<float>(is, "embeddings");
      if (!std::isfinite(v))
        throw DataError("non-finite value at row " + std::to_string(i));
      e(i, j) = v;
    }
  std::vector<std::int64_t> labels(n);
  for (auto &l : labels)
    l = detail::get_le<std::uint32_t>(is, "labels");
  if (is.peek() != std::char_traits<char>::eof())
    throw DataError("trailing bytes after IAAD payload");
  return Dataset::from_raw(std::move(e), labels, std::move(name));
}

struct CsvOptions {
  bool header = false;
};

inline void write_csv(std::ostream &os, const Dataset &d) {
  const auto &e = d.embeddings();
  const auto raw = d.raw_labels();
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    for (Eigen::Index j = 0; j < e.cols(); ++j)
      os << detail::format_double(e(i, j)) << ',';
    os << raw[static_cast<std::size_t>(i)] << '\n';
  }
}

inline Dataset read_csv(std::istream &is, CsvOptions opts = {}, std::string name = {}) {
  std::string line;
  std::size_t lineno = 0;
  if (opts.header) {
    std::getline(is, line);
    ++lineno;
  }
  std::vector<double> values;
  std::vector<std::int64_t> labels;
  std::size_t dim = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r")
      continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      auto pos = rest.find(',');
      fields.push_back(rest.substr(0, pos));
      if (pos == std::string_view::npos)
        break;
      rest.remove_prefix(pos + 1);
    }
    if (fields.size() < 2)
      throw DataError("line " + std::to_string(lineno) + ": need at least one value and a label");
    const std::size_t row_dim = fields.size() - 1;
    if (dim == 0)
      dim = row_dim;
    else if (row_dim != dim)
      throw DataError("line " + std::to_string(lineno) + ": dimension mismatch (" +
                      std::to_string(row_dim) + " vs " + std::to_string(dim) + ")");
    for (std::size_t j = 0; j < row_dim; ++j) {
      const double v = detail::parse_double(fields[j], lineno);
      if (!std::isfinite(v))
        throw DataError("line " + std::to_string(lineno) + ": non-finite value");
      values.push_back(v);
    }
    const double lab = detail::parse_double(fields.back(), lineno);
    if (lab != std::floor(lab))
      throw DataError("line " + std::to_string(lineno) + ": label must be an integer");
    labels.push_back(static_cast<std::int64_t>(lab));
  }
  if (labels.empty())
    throw DataError("CSV contains no samples");
  RowMatrix e = Eigen::Map<RowMatrix>(values.data(), static_cast<Eigen::Index>(labels.size()),
                                      static_cast<Eigen::Index>(dim));
  return Dataset::from_raw(std::move(e), labels, std::move(name));
}

inline Dataset load_dataset(const std::filesystem::path &path, FileFormat format,
                            CsvOptions csv = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open " + path.string());
  return format == FileFormat::csv ? read_csv(in, csv, path.stem().string())
                                   : read_binary(in, path.stem().string());
}

inline Dataset load_dataset(const std::filesystem::path &path) {
  return load_dataset(path, format_from_path(path));
}

inline void save_dataset(const Dataset &d, const std::filesystem::path &path, FileFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw DataError("cannot write " + path.string());
  if (format == FileFormat::csv)
    write_csv(out, d);
  else
    write_binary(out, d);
  if (!out)
    throw DataError("write failed for " + path.string());
}

inline void save_dataset(const Dataset &d, const std::filesystem::path &path) {
  save_dataset(d, path, format_from_path(path));
}

} // namespace iaa
