"""pgsv: progressive layered 2D Gaussian splat codec for images and video."""

from .errors import (CodecError, ConfigError, CorruptStreamError,
                     DegenerateCovarianceError, DegenerateRangeError,
                     ShapeMismatchError, StreamFormatError,
                     StreamTruncatedError, TrainingDivergedError)
from .splats import (CodecConfig, GaussianVideo, LayeredFrame, SplatArray,
                     cholesky_to_cov, cov_inverse_det, level_view,
                     load_checkpoint, save_checkpoint)
from .raster import (SplatGradients, render, render_backward,
                     render_reference)
from .optim import Adam, Adan, l2_loss, lr_at, make_optimizer
from .metrics import RDPoint, minmax_normalize, ms_ssim, psnr, rd_table
from .train import (GroundTruthPyramid, TrainReport, build_pyramid,
                    cyclic_level, encode_sequence, gsp_prune, init_iframe,
                    init_pframe, joint_loss, level_resolutions,
                    pruning_baseline_view, select_keyframes, train_frame,
                    train_monolithic_baseline, train_sequential_baseline)
from .quantize import (FrameQuantTables, QuantParams, QuantizedFrame,
                       QuantizedVideo, asym_dequantize, asym_quantize,
                       dequantize_frame, finetune_quantized, quantize_frame,
                       quantize_video, rvq_decode, rvq_encode, rvq_train)
from .stream import read_stream, truncate_stream, write_stream
from .pipeline import (EncodeResult, decode_images, encode_frames,
                       eval_stream)

__version__ = "0.1.0"
