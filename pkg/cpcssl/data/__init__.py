from cpcssl.data.samples import ContrastiveTask, PatchRef, SequenceDataset, SequenceSample, StepTask

__all__ = ["ContrastiveTask", "PatchRef", "SequenceDataset", "SequenceSample", "StepTask"]
