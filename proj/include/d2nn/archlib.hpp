#pragma once

#include <string>
#include <vector>

#include "d2nn/graph.hpp"
#include "d2nn/network.hpp"

namespace d2nn {

/// Sizes for the stock architectures. Every builder reads the fields it needs.
/// Control nodes send action 0 to the cheap branch (low, stop, skip) and the
/// last action to the expensive one, so the all-last-actions path is the
/// full network.
struct ArchParams {
    Index image_size = 16;
    Index channels = 1;
    Index classes = 2;        // per output head
    Index stem_filters = 4;   // first conv block, shared by every branch
    Index high_filters = 16;  // high-capacity conv width
    Index high_hidden = 64;
    Index low_hidden = 12;
    Index control_hidden = 8;
    Index head_hidden = 16;  // hierarchical leaves
    Index exit_hidden = 4;   // cascade early-exit heads, kept small so they cannot memorize
    Index stages = 4;  // cascade stages / chain links
    bool leaf_controllers = true;  // hierarchical: gate each leaf as well as each branch
};

/// N1 feeds a controller Q choosing the low-capacity N3 (action 0) or the
/// high-capacity N2 (action 1); both feed the output.
GraphDef build_high_low(const ArchParams& p = {});

/// Stage s has a controller choosing an early-exit head (action 0) or the
/// next stage (action 1). `stages` stages need stages-1 controllers.
GraphDef build_cascade(const ArchParams& p = {});

/// `stages` links, each a controller choosing a cheap 1x1 or a full 3x3 conv
/// whose outputs merge by addition with zero defaults.
GraphDef build_chain(const ArchParams& p = {});

/// Root N1, two branches gated by binary controllers Q1, Q2 (skip / execute),
/// leaves N4-N5 under N2 and N6-N8 under N3, one output per leaf.
GraphDef build_hierarchical(const ArchParams& p = {});

/// Control nodes whose cost exceeds `ratio` times the cheapest regular node
/// they control, as readable messages.
std::vector<std::string> controller_budget_violations(const Network& net, double ratio = 0.05);

}  // namespace d2nn
