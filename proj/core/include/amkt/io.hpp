#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amkt/tensor.hpp"

namespace amkt {

// Weights container: "AMKT" magic, u16 version, u16 tensor count, then per
// tensor a u8 rank, u32 little-endian dims and f32 little-endian row-major
// values. Round trips are bit exact.
void write_tensor_file(const std::string& path, const std::vector<Tensor>& tensors);
std::vector<Tensor> read_tensor_file(const std::string& path);
// The same byte stream without touching disk; provenance digests hash this.
std::string tensor_file_bytes(const std::vector<Tensor>& tensors);

// IDX image/label files (big-endian headers). Images come back as
// (N,1,H,W) with pixel values rescaled from 0..255 to [0,1].
Tensor read_idx_images(const std::string& path);
std::vector<int> read_idx_labels(const std::string& path);

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);
void ensure_parent_dir(const std::string& path);
void ensure_dir(const std::string& path);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace amkt
