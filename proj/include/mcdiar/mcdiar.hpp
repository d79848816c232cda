#pragma once

#include "mcdiar/cluster_types.hpp"
#include "mcdiar/clustering.hpp"
#include "mcdiar/config.hpp"
#include "mcdiar/errors.hpp"
#include "mcdiar/fusion.hpp"
#include "mcdiar/hungarian.hpp"
#include "mcdiar/local_io.hpp"
#include "mcdiar/log.hpp"
#include "mcdiar/matrix.hpp"
#include "mcdiar/pipeline.hpp"
#include "mcdiar/random.hpp"
#include "mcdiar/rttm.hpp"
#include "mcdiar/scoring.hpp"
#include "mcdiar/simulate.hpp"
#include "mcdiar/timeline.hpp"
#include "mcdiar/trend.hpp"
