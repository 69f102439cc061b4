#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace vloc {

enum class Region {
    All,
    Cervical,
    Thoracic,
    Lumbar,
    Sacral,
};

std::string_view region_name(Region r);

/// C1-C7, T1-T12, L1-L5, S1-S2 in head-to-foot order.
const std::vector<std::string>& standard_labels();

/// Twelve-label desk-scale chain T6-L5.
std::vector<std::string> desk_labels();

/// Region for a standard label; throws InvalidArgument for unknown labels.
Region region_of(std::string_view label);

bool is_standard_label(std::string_view label);

/// Validates that `labels` is non-empty, unique and drawn from the standard
/// ordering in chain order.
void validate_label_ordering(const std::vector<std::string>& labels);

} // namespace vloc
