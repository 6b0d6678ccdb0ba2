from .client import (
    JobFailure,
    ServiceEndpoint,
    SynthesisResult,
    SynthJob,
    embed,
    synthesize_batch,
    transcribe,
)
from .mock import MockBackend, MockServer, mock_services
from .selection import (
    FilterVerdict,
    extra_synth_transcripts,
    filter_hallucinations,
    select_reference_prompt,
    verdict_for,
)
