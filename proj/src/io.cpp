#include "xmhash/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace xmh::io {

namespace {

constexpr std::size_t kHeaderBytes = 16;

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

void put_u32(std::ostream& out, std::uint32_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return to_little(v);
}

std::ofstream open_out(const fs::path& path, bool binary) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error("unreadable file: " + path.string());
  return in;
}

template <typename Scalar>
void write_raw(const fs::path& path, const Matrix& m, const char* magic) {
  if (m.rows() > UINT32_MAX || m.cols() > UINT32_MAX) throw Error("matrix too large for raw format");
  auto out = open_out(path, true);
  out.write(magic, 4);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  put_u32(out, 0);
  std::vector<Scalar> row(static_cast<std::size_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = to_little(static_cast<Scalar>(m(i, j)));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(Scalar)));
  }
  if (!out) throw Error("write failed: " + path.string());
}

template <typename Scalar>
Matrix read_raw(const fs::path& path, const char* magic) {
  auto in = open_in(path, true);
  char got[4] = {};
  in.read(got, 4);
  if (!in || std::memcmp(got, magic, 4) != 0)
    throw Error("bad magic in " + path.string() + " (expected " + std::string(magic, 4) + ")");
  const auto rows = get_u32(in);
  const auto cols = get_u32(in);
  (void)get_u32(in);
  if (!in) throw Error("truncated header: " + path.string());
  const auto expected = kHeaderBytes + std::uintmax_t{rows} * cols * sizeof(Scalar);
  if (fs::file_size(path) != expected) throw Error("size mismatch in " + path.string());
  Matrix m(rows, cols);
  std::vector<Scalar> row(cols);
  for (std::uint32_t i = 0; i < rows; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(Scalar)));
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = static_cast<double>(to_little(row[j]));
  }
  if (!in) throw Error("truncated payload: " + path.string());
  return m;
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

void write_raw_f32(const fs::path& path, const Matrix& m) { write_raw<float>(path, m, "XMSH"); }
Matrix read_raw_f32(const fs::path& path) { return read_raw<float>(path, "XMSH"); }
void write_raw_f64(const fs::path& path, const Matrix& m) { write_raw<double>(path, m, "XMSD"); }
Matrix read_raw_f64(const fs::path& path) { return read_raw<double>(path, "XMSD"); }

Matrix read_csv(const fs::path& path) {
  auto in = open_in(path, false);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto r = rows.size();
    std::vector<double> values;
    for (auto field : split(line, ',')) {
      double v = 0.0;
      const auto* first = field.data();
      const auto* last = field.data() + field.size();
      if (!field.empty() && *first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc{} || ptr != last)
        throw Error(path.string() + ": cannot parse '" + std::string(field) + "' at (" + std::to_string(r) + "," +
                    std::to_string(values.size()) + ")");
      if (!std::isfinite(v))
        throw Error("non-finite value at (" + std::to_string(r) + "," + std::to_string(values.size()) + ") in " +
                    path.string());
      values.push_back(v);
    }
    if (rows.empty()) width = values.size();
    if (values.size() != width)
      throw Error(path.string() + ": row " + std::to_string(r) + " has " + std::to_string(values.size()) +
                  " columns, expected " + std::to_string(width));
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw Error("empty csv: " + path.string());
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return m;
}

void write_csv(const fs::path& path, const Matrix& m) {
  auto out = open_out(path, false);
  out.precision(17);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
}

LabelSets read_labels(const fs::path& path) {
  auto in = open_in(path, false);
  LabelSets labels;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<int> set;
    const auto body = trim(line);
    if (!body.empty()) {
      for (auto field : split(body, ';')) {
        if (field.empty()) continue;
        int v = 0;
        const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc{} || ptr != field.data() + field.size())
          throw Error(path.string() + ": bad label '" + std::string(field) + "' on row " +
                      std::to_string(labels.size()));
        set.push_back(v);
      }
    }
    labels.push_back(std::move(set));
  }
  return labels;
}

void write_labels(const fs::path& path, const LabelSets& labels) {
  auto out = open_out(path, false);
  for (const auto& set : labels) {
    for (std::size_t j = 0; j < set.size(); ++j) {
      if (j) out << ';';
      out << set[j];
    }
    out << '\n';
  }
}

void write_codes(const fs::path& path, const CodeMatrix& codes) {
  if (!is_binary(codes)) throw Error("write_codes: matrix is not binary");
  auto out = open_out(path, false);
  std::string line(static_cast<std::size_t>(codes.cols()), '0');
  for (Index i = 0; i < codes.rows(); ++i) {
    for (Index j = 0; j < codes.cols(); ++j) line[static_cast<std::size_t>(j)] = codes(i, j) > 0 ? '1' : '0';
    out << line << '\n';
  }
}

CodeMatrix read_codes(const fs::path& path) {
  auto in = open_in(path, false);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    const auto body = trim(line);
    if (body.empty()) continue;
    if (!lines.empty() && body.size() != lines.front().size()) throw Error("ragged code file: " + path.string());
    if (body.find_first_not_of("01") != std::string_view::npos) throw Error("invalid code character in " + path.string());
    lines.emplace_back(body);
  }
  if (lines.empty()) throw Error("empty code file: " + path.string());
  CodeMatrix codes(static_cast<Index>(lines.size()), static_cast<Index>(lines.front().size()));
  for (std::size_t i = 0; i < lines.size(); ++i)
    for (std::size_t j = 0; j < lines[i].size(); ++j)
      codes(static_cast<Index>(i), static_cast<Index>(j)) = lines[i][j] == '1' ? 1.0 : -1.0;
  return codes;
}

std::string read_text(const fs::path& path) {
  auto in = open_in(path, false);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path, false);
  out << text;
}

}  // namespace xmh::io
