#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "loom/domain.hpp"
#include "loom/narrative.hpp"

namespace loom {

class Provider;

struct OutlineOptions {
    std::optional<std::string> user_spec;
    std::string moral;
    // Creative plot variations generated before outlining.
    int variations = 3;
};

// Result of the outline chain. `candidates` holds the outline produced for
// every ladder level; `alternates` the extra candidates the model offered
// for the requested level (first one wins).
struct OutlineResult {
    Outline outline;
    std::vector<Outline> candidates;
    std::vector<Outline> alternates;
};

// Three-stage chain: (1) creative variations of the instances, (2) one
// outline per abstraction level, (3) the requested level tailored to the
// user's specification. Rejected variants are ignored. Throws
// ValidationError when no usable instance remains.
OutlineResult instances_to_outline(const std::vector<Variant>& instances, AbstractionLevel level,
                                   const OutlineOptions& options, const StoryDomain& domain,
                                   Provider& provider);

// Same chain over raw story texts (used by the abstraction evaluation).
OutlineResult texts_to_outline(const std::vector<std::string>& instance_texts, AbstractionLevel level,
                               const OutlineOptions& options, const StoryDomain* domain,
                               Provider& provider, const std::string& tag_prefix = "outline");

enum class AbstractionDirection { more_abstract, more_concrete };

std::string_view to_string(AbstractionDirection direction);
AbstractionDirection abstraction_direction_from_string(std::string_view text);

inline constexpr int default_suggestion_count = 3;

// Replacement phrasings for `snippet`. Throws NotFoundError when the snippet
// does not occur in the outline.
std::vector<std::string> abstraction_suggest(std::string_view snippet, AbstractionDirection direction,
                                             const Outline& context, Provider& provider,
                                             int count = default_suggestion_count);

// Replaces the first occurrence of `snippet` (searching events in order)
// with `replacement` and re-validates the outline.
Outline apply_suggestion(Outline outline, std::string_view snippet, std::string_view replacement);

struct EntryRange {
    int start = 0; // first pivot entry
    int end = 0;   // one past the last; start == end means unsupported

    bool empty() const { return start >= end; }
    bool operator==(const EntryRange&) const = default;
};

struct OutlineMapping {
    // One range per outline event, in outline order, pairwise disjoint.
    std::vector<EntryRange> ranges;
    std::vector<int> uncovered_entries;
    std::vector<std::string> warnings;
};

// Which pivot entries act out which outline event. Model answers are
// normalized so ranges are ordered, in bounds and non-overlapping.
OutlineMapping map_outline_to_pivot(const Outline& outline, const Variant& pivot, Provider& provider);

// Normalization step of map_outline_to_pivot, exposed for testing.
OutlineMapping normalize_mapping(std::size_t event_count, std::size_t entry_count,
                                 const std::vector<std::pair<int, EntryRange>>& proposed);

} // namespace loom
