#pragma once

#include <string>
#include <vector>

#include "kfac2l/runlog.hpp"

namespace kfac2l {

/// Loss uses a log10 y axis; Gap uses a linear one and skips rows without a gap.
enum class PlotKind { Loss, Gap };

/** One polyline per log (x = epoch), legend labelled by method tag.
 *  Output bytes depend only on the inputs. Throws BadConfig on an empty set. */
std::string render_svg(const std::vector<RunLog>& logs, PlotKind kind);
void render_plot(const std::vector<RunLog>& logs, const std::string& path, PlotKind kind);

}  // namespace kfac2l
