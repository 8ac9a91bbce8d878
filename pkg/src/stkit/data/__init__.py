from .batching import Batch, collate, make_batches
from .records import read_records, write_records
from .synth import synth_corpus
from .tasks import Example, TaskSpec, length_filter, task_map, task_reference, task_source
from .transfer import LoadReport, init_from_pretrained

__all__ = ["Batch", "collate", "make_batches", "read_records", "write_records", "synth_corpus", "Example",
           "TaskSpec", "length_filter", "task_map", "task_reference", "task_source", "LoadReport", "init_from_pretrained"]
