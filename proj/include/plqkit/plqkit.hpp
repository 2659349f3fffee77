#pragma once

// Everything except the command-line front end (plqkit/cli.hpp).

#include "plqkit/analysis.hpp"
#include "plqkit/cuts.hpp"
#include "plqkit/error.hpp"
#include "plqkit/ext_real.hpp"
#include "plqkit/io.hpp"
#include "plqkit/kkt.hpp"
#include "plqkit/plq.hpp"
#include "plqkit/projection.hpp"
#include "plqkit/qp.hpp"
#include "plqkit/simplify.hpp"
