#include "boltpipe/point_cloud.hpp"

#include <algorithm>

namespace boltpipe {

PointCloud::PointCloud(std::vector<Vec3> positions) : positions_(std::move(positions)) {
    for (std::size_t i = 0; i < positions_.size(); ++i) {
        if (!positions_[i].finite()) {
            throw ValidationError("point " + std::to_string(i) + " has a non-finite coordinate");
        }
    }
}

std::span<const std::uint8_t> PointCloud::labels() const {
    if (!labels_) throw ContractError("cloud has no labels");
    return *labels_;
}

void PointCloud::set_labels(std::vector<std::uint8_t> labels) {
    if (labels.size() != positions_.size()) {
        throw ValidationError("label count " + std::to_string(labels.size()) + " does not match point count " +
                              std::to_string(positions_.size()));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] > 1) {
            throw ValidationError("label at point " + std::to_string(i) + " is " + std::to_string(labels[i]) +
                                  ", expected 0 or 1");
        }
    }
    labels_ = std::move(labels);
}

bool PointCloud::has_channel(std::string_view name) const {
    return std::any_of(channels_.begin(), channels_.end(), [&](const Channel& c) { return c.name == name; });
}

std::span<const double> PointCloud::channel(std::string_view name) const {
    for (const auto& c : channels_) {
        if (c.name == name) return c.values;
    }
    throw ContractError("cloud has no channel '" + std::string(name) + "'");
}

void PointCloud::set_channel(std::string name, std::vector<double> values) {
    if (values.size() != positions_.size()) {
        throw ValidationError("channel '" + name + "' has " + std::to_string(values.size()) + " values for " +
                              std::to_string(positions_.size()) + " points");
    }
    for (auto& c : channels_) {
        if (c.name == name) {
            c.values = std::move(values);
            return;
        }
    }
    channels_.push_back({std::move(name), std::move(values)});
}

void PointCloud::remove_channel(std::string_view name) {
    std::erase_if(channels_, [&](const Channel& c) { return c.name == name; });
}

std::span<const Rgb> PointCloud::colors() const {
    if (!colors_) throw ContractError("cloud has no colors");
    return *colors_;
}

void PointCloud::set_colors(std::vector<Rgb> colors) {
    if (colors.size() != positions_.size()) throw ValidationError("color count does not match point count");
    colors_ = std::move(colors);
}

PointCloud PointCloud::subset(std::span<const PointId> ids) const {
    PointCloud out;
    out.positions_.reserve(ids.size());
    for (PointId id : ids) out.positions_.push_back(positions_.at(id));
    if (labels_) {
        std::vector<std::uint8_t> l;
        l.reserve(ids.size());
        for (PointId id : ids) l.push_back((*labels_)[id]);
        out.labels_ = std::move(l);
    }
    for (const auto& c : channels_) {
        std::vector<double> v;
        v.reserve(ids.size());
        for (PointId id : ids) v.push_back(c.values[id]);
        out.channels_.push_back({c.name, std::move(v)});
    }
    if (colors_) {
        std::vector<Rgb> v;
        v.reserve(ids.size());
        for (PointId id : ids) v.push_back((*colors_)[id]);
        out.colors_ = std::move(v);
    }
    return out;
}

void PointCloud::validate() const {
    for (std::size_t i = 0; i < positions_.size(); ++i) {
        if (!positions_[i].finite()) {
            throw ValidationError("point " + std::to_string(i) + " has a non-finite coordinate");
        }
    }
    if (labels_) {
        if (labels_->size() != positions_.size()) throw ValidationError("label count mismatch");
        for (auto l : *labels_) {
            if (l > 1) throw ValidationError("label outside {0,1}");
        }
    }
    for (const auto& c : channels_) {
        if (c.values.size() != positions_.size()) throw ValidationError("channel '" + c.name + "' length mismatch");
    }
    if (colors_ && colors_->size() != positions_.size()) throw ValidationError("color count mismatch");
}

std::size_t PointCloud::count_label(std::uint8_t value) const {
    if (!labels_) return 0;
    return static_cast<std::size_t>(std::count(labels_->begin(), labels_->end(), value));
}

} // namespace boltpipe
