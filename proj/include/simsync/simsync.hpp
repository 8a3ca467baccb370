#pragma once

#include "simsync/types.hpp"
#include "simsync/view_graph.hpp"
#include "simsync/assembly.hpp"
#include "simsync/ipm.hpp"
#include "simsync/sdp.hpp"
#include "simsync/registration.hpp"
#include "simsync/robust.hpp"
#include "simsync/rng.hpp"
#include "simsync/simulate.hpp"
#include "simsync/eval.hpp"
#include "simsync/graph_io.hpp"
#include "simsync/parallel.hpp"
