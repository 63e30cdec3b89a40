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

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "ws/linalg.hpp"
#include "ws/model.hpp"

namespace ws {

// "WSM1" | rows u32 | cols u32 | rows*cols f64, row-major. All little-endian.
std::string encode_matrix(const Matrix& m);
Matrix decode_matrix(std::string_view bytes);

// "WSE1" | space u8 | count u32 | dim u32 | count * (class u32, dim f64).
std::string encode_embeddings(const EmbeddingSet& set);
EmbeddingSet decode_embeddings(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

Matrix read_matrix_file(const std::filesystem::path& path);
void write_matrix_file(const std::filesystem::path& path, const Matrix& m);
EmbeddingSet read_embedding_file(const std::filesystem::path& path);
void write_embedding_file(const std::filesystem::path& path, const EmbeddingSet& set);

// Comma-separated rows of reals; blank lines ignored. Every row must have the
// same number of fields.
Matrix parse_csv_matrix(std::string_view text);

}  // namespace ws
