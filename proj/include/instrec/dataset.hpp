#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "instrec/error.hpp"

namespace instrec {

/// Row-major numeric training table with integer class labels.
struct Dataset {
    std::size_t attribute_count = 0;
    std::vector<double> values;
    std::vector<std::uint32_t> labels;
    std::vector<std::string> class_labels;

    std::size_t size() const { return labels.size(); }
    std::size_t class_count() const { return class_labels.size(); }

    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(values).subspan(i * attribute_count, attribute_count);
    }

    double at(std::size_t i, std::size_t attribute) const { return values[i * attribute_count + attribute]; }

    void add(std::span<const double> row, std::uint32_t label) {
        if (row.size() != attribute_count)
            throw DimensionError("row has " + std::to_string(row.size()) + " attributes, expected " +
                                 std::to_string(attribute_count));
        values.insert(values.end(), row.begin(), row.end());
        labels.push_back(label);
    }

    void validate() const {
        if (labels.empty()) throw EmptyDatasetError("dataset has no objects");
        if (attribute_count == 0) throw InvalidArgumentError("dataset has no attributes");
        if (values.size() != labels.size() * attribute_count)
            throw DimensionError("value table does not match " + std::to_string(labels.size()) + " rows of " +
                                 std::to_string(attribute_count) + " attributes");
        if (class_labels.empty()) throw InvalidArgumentError("dataset declares no classes");
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] >= class_labels.size())
                throw InvalidArgumentError("label " + std::to_string(labels[i]) + " of row " + std::to_string(i) +
                                           " is not a declared class");
    }
};

/// Index of the largest value; ties resolve to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace instrec
