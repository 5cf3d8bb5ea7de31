#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "boltpipe/types.hpp"

namespace boltpipe {

using Rgb = std::array<std::uint8_t, 3>;

// Named per-point scalar column. Stored as 64-bit in memory.
struct Channel {
    std::string name;
    std::vector<double> values;
};

/// Positions plus optional per-point labels (1 = bolt), named scalar channels
/// and colors. All per-point arrays have the same length as `positions`.
class PointCloud {
public:
    PointCloud() = default;
    explicit PointCloud(std::vector<Vec3> positions);

    std::size_t size() const { return positions_.size(); }
    bool empty() const { return positions_.empty(); }

    std::span<const Vec3> positions() const { return positions_; }
    const Vec3& position(std::size_t i) const { return positions_[i]; }

    bool has_labels() const { return labels_.has_value(); }
    std::span<const std::uint8_t> labels() const;
    void set_labels(std::vector<std::uint8_t> labels);
    void clear_labels() { labels_.reset(); }

    bool has_channel(std::string_view name) const;
    std::span<const double> channel(std::string_view name) const;
    void set_channel(std::string name, std::vector<double> values);
    void remove_channel(std::string_view name);
    const std::vector<Channel>& channels() const { return channels_; }

    bool has_colors() const { return colors_.has_value(); }
    std::span<const Rgb> colors() const;
    void set_colors(std::vector<Rgb> colors);

    /// Points at `ids` (in the given order), with every per-point array carried along.
    PointCloud subset(std::span<const PointId> ids) const;

    /// Throws ValidationError if any invariant is broken.
    void validate() const;

    std::size_t count_label(std::uint8_t value) const;

private:
    std::vector<Vec3> positions_;
    std::optional<std::vector<std::uint8_t>> labels_;
    std::vector<Channel> channels_;
    std::optional<std::vector<Rgb>> colors_;
};

} // namespace boltpipe
