#pragma once

#include "core.hpp"
#include "task.hpp"
#include "fabric.hpp"
#include "voting.hpp"
#include "protocol.hpp"
#include "voter.hpp"
#include "client.hpp"
#include "rl/ast.hpp"
#include "rl/parser.hpp"
#include "rl/rcode.hpp"
#include "rl/rint.hpp"
#include "recovery.hpp"
#include "reliability.hpp"
#include "perf.hpp"
#include "scenario.hpp"
