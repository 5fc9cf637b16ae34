#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "msa/error.hpp"

namespace msa {

/// 2-D grid of small integer labels, row-major. Binary masks hold {0, 1};
/// label maps additionally use kIgnore.
struct Mask {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(int height, int width, std::uint8_t fill = 0)
        : h(height), w(width), data(static_cast<std::size_t>(height) * width, fill)
    {
        if (height < 0 || width < 0) throw ArgumentError("negative mask extent");
    }

    std::size_t size() const noexcept { return data.size(); }
    bool empty() const noexcept { return data.empty(); }
    std::uint8_t& operator()(int y, int x) noexcept { return data[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t operator()(int y, int x) const noexcept { return data[static_cast<std::size_t>(y) * w + x]; }

    std::size_t count(std::uint8_t v = 1) const
    {
        return static_cast<std::size_t>(std::count(data.begin(), data.end(), v));
    }
    bool any() const { return std::any_of(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }); }

    friend bool operator==(const Mask&, const Mask&) = default;
};

inline constexpr std::uint8_t kIgnore = 255;

inline void require_same_shape(const Mask& a, const Mask& b, const char* what)
{
    if (a.h != b.h || a.w != b.w)
        throw ArgumentError(std::string(what) + ": shape mismatch " + std::to_string(a.h) + "x" +
                            std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" + std::to_string(b.w));
}

}  // namespace msa
