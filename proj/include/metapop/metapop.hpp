#pragma once

#include "metapop/activity.hpp"
#include "metapop/centrality.hpp"
#include "metapop/communities.hpp"
#include "metapop/core.hpp"
#include "metapop/csv.hpp"
#include "metapop/epidemic_engine.hpp"
#include "metapop/matrix_io.hpp"
#include "metapop/mobility_matrices.hpp"
#include "metapop/parallel.hpp"
#include "metapop/stats.hpp"
#include "metapop/synth_city.hpp"
#include "metapop/temporal_paths.hpp"
#include "metapop/trip_ingest.hpp"
