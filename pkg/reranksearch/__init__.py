from reranksearch import errors as errors
from reranksearch import config as config
from reranksearch import utils as utils
from reranksearch import transport as transport
from reranksearch import ingest as ingest
from reranksearch import embedder as embedder
from reranksearch import index as index
from reranksearch import reranker as reranker
from reranksearch import pipeline as pipeline
from reranksearch import evaluation as evaluation
from reranksearch import draw as draw
