#pragma once

#include "elastomono/assembly.hpp"
#include "elastomono/config.hpp"
#include "elastomono/forward.hpp"
#include "elastomono/io.hpp"
#include "elastomono/material.hpp"
#include "elastomono/mesh.hpp"
#include "elastomono/noise.hpp"
#include "elastomono/parallel.hpp"
#include "elastomono/recon.hpp"
#include "elastomono/scenario.hpp"
#include "elastomono/spectral.hpp"
