#pragma once

#include <string>
#include <vector>

#include "srdet/core/tensor.hpp"
#include "srdet/det/box.hpp"

namespace srdet {

/// An annotated image at its original (on-disk) resolution.
struct RawSample {
    std::string id;
    TensorF image;
    std::vector<Box> boxes;
    std::vector<int> class_ids;
};

/// Raw samples plus the class-name table; mirrors the on-disk layout.
struct RawDataset {
    std::vector<RawSample> samples;
    std::vector<std::string> class_names;
    std::string split;
};

/// One HR/LR training pair. Boxes live in HR pixel coordinates; the LR
/// image is the HR image downscaled by the upscale factor.
struct Sample {
    std::string id;
    TensorF hr_image;
    TensorF lr_image;
    std::vector<Box> boxes;
    std::vector<int> class_ids;

    void validate(int alpha) const {
        if (hr_image.height() != lr_image.height() * alpha ||
            hr_image.width() != lr_image.width() * alpha)
            throw ValidationError("sample " + id + ": lr dims * alpha != hr dims");
        if (boxes.size() != class_ids.size())
            throw ValidationError("sample " + id + ": box/class count mismatch");
        for (const Box& b : boxes)
            if (!b.valid() || b.xmin < 0 || b.ymin < 0 || b.xmax > hr_image.width() ||
                b.ymax > hr_image.height())
                throw ValidationError("sample " + id + ": box out of bounds");
    }
};

struct Dataset {
    std::vector<Sample> samples;
    std::vector<std::string> class_names;
    std::string split;
    int alpha = 4;

    bool empty() const { return samples.empty(); }
    std::size_t size() const { return samples.size(); }
};

} // namespace srdet
