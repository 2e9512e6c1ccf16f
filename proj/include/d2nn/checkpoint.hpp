#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "d2nn/graph.hpp"
#include "d2nn/learn.hpp"

namespace d2nn {

/// Everything needed to evaluate a trained network or resume its training.
struct Checkpoint {
    GraphDef graph;
    TrainConfig config;
    TrainState<float> state;
    std::int64_t horizon = 0;  // epsilon decay horizon in steps, 0 before training
};

/// Little-endian binary layout, version 1:
///
///     "D2NC" | u32 version | u32 spec bytes | spec text (canonical form)
///     config fields (fixed order, see checkpoint.cpp)
///     i64 step | u32 epoch | i64 horizon
///     3 parameter stores (weights, first moment, second moment), each
///       per node, per layer: u8 kind, then for parametric layers
///       weights and bias as u32 rank | u32 dims[rank] | f32 data
///
/// Decoding an encoded checkpoint and encoding it again gives the same bytes.
std::vector<unsigned char> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes, const std::string& name = "checkpoint");

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace d2nn
