#pragma once

#include "usagewatch/config.hpp"
#include "usagewatch/csv.hpp"
#include "usagewatch/date.hpp"
#include "usagewatch/detector.hpp"
#include "usagewatch/errors.hpp"
#include "usagewatch/events.hpp"
#include "usagewatch/observation.hpp"
#include "usagewatch/pca.hpp"
#include "usagewatch/ranking.hpp"
#include "usagewatch/report.hpp"
#include "usagewatch/robust.hpp"
#include "usagewatch/synth.hpp"
#include "usagewatch/usage_table.hpp"
#include "usagewatch/util.hpp"
