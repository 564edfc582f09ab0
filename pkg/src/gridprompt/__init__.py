"""Visual prompting via grid-image inpainting.

Compose example pairs and a query into a masked grid canvas, inpaint the
answer cell with a masked autoencoder that predicts frozen-codebook tokens,
and evaluate the completions on synthetic image-to-image tasks.
"""

from .composer import (GridLayout, LabelStyle, TaskExample, VisualPrompt,
                       compose_prompt, extract_answer, layout_from_name,
                       paste_answer, render_label)
from .errors import (ConfigurationError, EmptyExampleError, GeometryError,
                     NoDetectionError)
from .figures import (DatasetManifest, TaskInstance, TaskKind, build_dataset,
                      materialize, render_training_figure, sample_task)
from .harness import (CopyPredictor, EvalReport, EvalSpec, ModelPredictor,
                      copy_baseline, ensemble_predict, evaluate, evaluate_task,
                      make_instances, render_table)
from .mae import (MaeConfig, MaeModel, attention_maps, inpaint, masked_ce_loss,
                  patchify, pixel_mae_loss, predict_tokens, random_mask,
                  unpatchify)
from .metrics import (Box, bbox_iou, color_aware_miou, largest_component_bbox,
                      miou_binary, mse, round_to_palette)
from .training import (TrainConfig, ablation_grid_vs_plain, lr_at, train_mae,
                       train_vq)
from .vq import VqConfig, VqModel, decode_tokens, encode_image, quantize, vq_loss

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
