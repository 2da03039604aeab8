#pragma once

#include "astrosnn/astrocyte.hpp"
#include "astrosnn/checkpoint.hpp"
#include "astrosnn/commands.hpp"
#include "astrosnn/common.hpp"
#include "astrosnn/config.hpp"
#include "astrosnn/encoding.hpp"
#include "astrosnn/experiment.hpp"
#include "astrosnn/idx.hpp"
#include "astrosnn/io.hpp"
#include "astrosnn/lif.hpp"
#include "astrosnn/network.hpp"
#include "astrosnn/plasticity.hpp"
#include "astrosnn/synapses.hpp"
