#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "d2nn/tensor.hpp"

namespace d2nn {

/// Labelled examples stored as one [count, ...] float tensor.
struct Dataset {
    Tensorf images;
    std::vector<int> labels;
    /// 1 marks a hard example. Diagnostic only: never used for training and
    /// not stored in raw files. Empty when unknown.
    std::vector<std::uint8_t> hard;

    Index size() const { return images.rank() == 0 ? 0 : images.dim(0); }
    Shape example_shape() const { return d2nn::example_shape(images.shape()); }
    int class_count() const;

    Dataset subset(std::span<const std::size_t> indices) const;

    /// Rows `indices` packed into a batch tensor of the requested scalar type.
    template <typename Scalar>
    Tensor<Scalar> batch(std::span<const std::size_t> indices) const {
        Tensor<Scalar> out(with_batch(static_cast<Index>(indices.size()), example_shape()));
        auto dst = out.matrix();
        const auto src = images.matrix();
        for (std::size_t j = 0; j < indices.size(); ++j)
            dst.row(static_cast<Index>(j)) = src.row(static_cast<Index>(indices[j])).template cast<Scalar>();
        return out;
    }
};

/// Desk-scale stand-in for the face / object tasks. Objects are bar glyphs;
/// easy renderings are centred and high contrast, hard ones are faint,
/// displaced anywhere in the frame and surrounded by distractor strokes.
struct SyntheticTask {
    enum class Kind {
        binary,        // dot over the left end of a bar (class 1) vs over the right end (class 0)
        cascade,       // binary with `easy_negative_fraction` of the set being easy negatives
        hierarchical,  // 10 classes in two superclasses of 4 and 6
    };
    Kind kind = Kind::binary;
    Index image_size = 16;
    Index count = 1000;
    double hard_fraction = 0.5;
    double easy_negative_fraction = 0.8;
    std::uint64_t seed = 1;
};

Dataset gen_synthetic(const SyntheticTask& task);

/// Class -> superclass for the hierarchical task (0 for classes 0-3, 1 for 4-9).
int superclass_of(int cls);

/// IDX image and label files (big-endian, as used by MNIST). Images of rank
/// 2 per example gain a channel axis; unsigned bytes are scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
/// Writes an unsigned-byte IDX pair; values are clamped to [0, 1] and quantized.
void save_idx(const Dataset& data, const std::string& images_path, const std::string& labels_path);

/// Little-endian raw container:
///   "D2NR" | u32 count | u32 rank | u32 dims[rank] | f32 data | u32 labels
/// dims describe one example. save_raw followed by load_raw is the identity
/// on images and labels.
Dataset load_raw(const std::string& path);
void save_raw(const Dataset& data, const std::string& path);

}  // namespace d2nn
