#pragma once

#include <string>
#include <string_view>

#include "teachloop/core/types.hpp"

namespace teachloop {

/// Lowercase, trim, and collapse internal whitespace runs to one space.
std::string normalize_answer(std::string_view text);

/// Pure scoring rule per comparison mode.
///
/// proficiency-threshold reads both sides as reals: the prediction is the
/// student's proficiency and the gold answer is the item's latent pass
/// threshold; correct iff proficiency > threshold. test-execution-stub
/// always throws kNotSupported.
bool compare_answers(std::string_view predicted, std::string_view gold,
                     ComparisonMode mode);

/// Round-trippable decimal form used for proficiencies and thresholds.
std::string format_real(double value);

}  // namespace teachloop
