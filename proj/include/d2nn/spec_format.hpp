#pragma once

#include <string>
#include <string_view>

#include "d2nn/graph.hpp"

namespace d2nn {

/// Parses the line-oriented graph-spec format:
///
///     # comment
///     node x input shape=1x16x16
///     node N1 regular {
///       conv2d out=8 k=3 stride=2 pad=1
///       relu
///       maxpool k=3 stride=2
///     }
///     node D dummy value=0 shape=2
///     node y output
///     edge x -> N1
///     edge Q -> N2 control
///     edge N2 -> M default=zeros        (or default=const:<v>)
///
/// Throws ParseError carrying the line and column of the offending token.
/// Structural rules are checked separately by validate().
GraphDef parse_spec(std::string_view text);

/// Canonical text for a graph; parse_spec(emit_spec(g)) == g.
std::string emit_spec(const GraphDef& g);

GraphDef load_spec_file(const std::string& path);
void save_spec_file(const GraphDef& g, const std::string& path);

}  // namespace d2nn
