// Copyright 2026 The Weight Surgery Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ws/formats.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "ws/errors.hpp"

namespace ws {

namespace {

constexpr std::string_view kMatrixMagic = "WSM1";
constexpr std::string_view kEmbeddingMagic = "WSE1";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

std::uint32_t checked_u32(Eigen::Index n, std::string_view what) {
  if (n < 0 || static_cast<std::uint64_t>(n) > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(n);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  void expect_magic(std::string_view magic) {
    need(magic.size(), "magic");
    if (bytes_.substr(0, magic.size()) != magic) {
      fail(0, "bad magic, expected \"" + std::string(magic) + "\"");
    }
    pos_ += magic.size();
  }

  std::uint8_t u8(std::string_view what) {
    need(1, what);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  std::uint32_t u32(std::string_view what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64(std::string_view what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    const std::size_t at = pos_;
    pos_ += 8;
    const double v = std::bit_cast<double>(bits);
    if (!std::isfinite(v)) fail(at, "non-finite value in " + std::string(what));
    return v;
  }

  // Confirms `count` more bytes exist before any allocation happens.
  void need(std::size_t count, std::string_view what) const {
    if (bytes_.size() - pos_ < count) {
      fail(pos_, "truncated " + std::string(what) + ": need " + std::to_string(count) + " bytes, have " +
                     std::to_string(bytes_.size() - pos_));
    }
  }

  // Overflow-safe variant of need() for count * item_size bytes.
  void need_items(std::uint64_t count, std::uint64_t item_size, std::string_view what) const {
    const std::size_t left = bytes_.size() - pos_;
    if (item_size != 0 && count > left / item_size) {
      fail(pos_, "truncated " + std::string(what) + ": need " + std::to_string(count) + " items of " +
                     std::to_string(item_size) + " bytes, have " + std::to_string(left) + " bytes");
    }
  }

  void expect_end() const {
    if (pos_ != bytes_.size()) {
      fail(pos_, std::to_string(bytes_.size() - pos_) + " trailing bytes");
    }
  }

  [[noreturn]] void fail(std::size_t offset, const std::string& msg) const {
    throw Error(ErrorCode::kParseError, "at byte offset " + std::to_string(offset) + ": " + msg);
  }

  std::size_t pos() const noexcept { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_matrix(const Matrix& m) {
  std::string out(kMatrixMagic);
  put_u32(out, checked_u32(m.rows(), "row count"));
  put_u32(out, checked_u32(m.cols(), "column count"));
  out.reserve(out.size() + static_cast<std::size_t>(m.size()) * 8);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_f64(out, m(i, j));
  }
  return out;
}

Matrix decode_matrix(std::string_view bytes) {
  Reader in(bytes);
  in.expect_magic(kMatrixMagic);
  const std::uint32_t rows = in.u32("row count");
  const std::uint32_t cols = in.u32("column count");
  if (rows == 0 || cols == 0) in.fail(4, "matrix dimensions must be positive");
  in.need_items(static_cast<std::uint64_t>(rows) * cols, 8, "matrix payload");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = in.f64("matrix payload");
  }
  in.expect_end();
  return m;
}

std::string encode_embeddings(const EmbeddingSet& set) {
  std::string out(kEmbeddingMagic);
  out.push_back(static_cast<char>(set.space()));
  put_u32(out, checked_u32(static_cast<Eigen::Index>(set.size()), "record count"));
  put_u32(out, checked_u32(set.dim(), "dimension"));
  for (std::size_t r = 0; r < set.size(); ++r) {
    put_u32(out, set.labels()[r]);
    const auto col = set.vectors().col(static_cast<Eigen::Index>(r));
    for (Eigen::Index k = 0; k < col.size(); ++k) put_f64(out, col(k));
  }
  return out;
}

EmbeddingSet decode_embeddings(std::string_view bytes) {
  Reader in(bytes);
  in.expect_magic(kEmbeddingMagic);
  const std::uint8_t flag = in.u8("space flag");
  if (flag > 1) in.fail(4, "space flag must be 0 or 1, got " + std::to_string(flag));
  const std::uint32_t count = in.u32("record count");
  const std::uint32_t dim = in.u32("dimension");
  if (dim == 0) in.fail(9, "dimension must be positive");
  in.need_items(count, 4 + static_cast<std::uint64_t>(dim) * 8, "records");
  Matrix vectors(dim, count);
  std::vector<ClassId> labels;
  labels.reserve(count);
  for (std::uint32_t r = 0; r < count; ++r) {
    labels.push_back(in.u32("class id"));
    for (std::uint32_t k = 0; k < dim; ++k) vectors(k, r) = in.f64("record vector");
  }
  in.expect_end();
  return EmbeddingSet(static_cast<EmbeddingSpace>(flag), std::move(vectors), std::move(labels));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::kIoError, "failed reading " + path.string());
  return std::move(buf).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::kIoError, "failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::kIoError, "cannot move output into place at " + path.string());
  }
}

Matrix read_matrix_file(const std::filesystem::path& path) {
  try {
    return decode_matrix(read_file(path));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kParseError) throw;
    throw Error(e.code(), path.string() + " " + e.what());
  }
}

void write_matrix_file(const std::filesystem::path& path, const Matrix& m) {
  write_file_atomic(path, encode_matrix(m));
}

EmbeddingSet read_embedding_file(const std::filesystem::path& path) {
  try {
    return decode_embeddings(read_file(path));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kParseError) throw;
    throw Error(e.code(), path.string() + " " + e.what());
  }
}

void write_embedding_file(const std::filesystem::path& path, const EmbeddingSet& set) {
  write_file_atomic(path, encode_embeddings(set));
}

Matrix parse_csv_matrix(std::string_view text) {
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) {
      std::vector<double> row;
      std::size_t pos = 0;
      while (pos <= line.size()) {
        std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) comma = line.size();
        std::string_view field = line.substr(pos, comma - pos);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (field.empty() || ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
          throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": bad number '" +
                                                  std::string(field) + "'");
        }
        row.push_back(v);
        pos = comma + 1;
      }
      if (!rows.empty() && row.size() != rows.front().size()) {
        throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": expected " +
                                                std::to_string(rows.front().size()) + " fields, got " +
                                                std::to_string(row.size()));
      }
      rows.push_back(std::move(row));
    }
    start = end + 1;
  }
  if (rows.empty()) throw Error(ErrorCode::kParseError, "CSV matrix is empty");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

}  // namespace ws
