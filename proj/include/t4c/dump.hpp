#pragma once

// Debug dumps of dense and sparse tensors (float32 payload).

#include <string>
#include <vector>

#include "t4c/sparse_tensor.hpp"

namespace t4c {

std::vector<std::uint8_t> encode_dense_dump(const Tensor<float>& t);
Tensor<float> decode_dense_dump(const std::vector<std::uint8_t>& bytes);
void write_dense_dump(const std::string& path, const Tensor<float>& t);
Tensor<float> read_dense_dump(const std::string& path);

std::vector<std::uint8_t> encode_sparse_dump(const SparseTensor<float>& s);
SparseTensor<float> decode_sparse_dump(const std::vector<std::uint8_t>& bytes);
void write_sparse_dump(const std::string& path, const SparseTensor<float>& s);
SparseTensor<float> read_sparse_dump(const std::string& path);

}  // namespace t4c
