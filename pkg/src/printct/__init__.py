"""printct: synthetic CT metrology for 3D-print quality.

Builds void-laden voxel phantoms, simulates printing defects and a
parallel-beam X-ray scan, reconstructs with filtered back projection, and
measures cusp density, surface roughness, porosity and void detectability
per printer setting.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, GeometryError, IngestError, PrintCTError,
                     RegistrationError, ResolutionError, ScheduleError,
                     SegmentationError, StageError)
from .fbp import FilterSpec, fbp_slice, filter_projection, reconstruct_volume
from .grid import (BACKGROUND, MATERIAL, VOID, LabelVolume, VoxelGrid,
                   grid_from_labels)
from .metrology import (MetricsReport, SmoothingSpec, align, cusp_density,
                        porosity, rank_settings, roughness)
from .phantom import (PhantomSpec, VoidSpec, designed_porosity, sample1_spec,
                      sample2_spec, voxelize)
from .printsim import (BUILTIN_PROFILES, DefectModel, PrinterProfile,
                       PrinterSettings, apply_layer_quantization,
                       apply_surface_noise, apply_underextrusion,
                       defect_model_for, settings_table, simulate_print)
from .segment import (DetectabilityReport, VoidDetection, extract_voids,
                      otsu_threshold, score_detectability, segment)
from .xray import (ScanGeometry, Sinogram, add_photon_noise, attenuate,
                   geometry_for, project_volume, radon_slice)

__all__ = [name for name in dir() if not name.startswith("_")]
