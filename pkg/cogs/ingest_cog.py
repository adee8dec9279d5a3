# cogs/ingest_cog.py
import logging

from utils.artifacts import ArtifactWriter
from utils.commands import INPUT_OPTIONS, RUN_OPTIONS, Cog, command
from utils.pipeline import ingest as ingest_ticks
from utils.run_config import RunConfig

log = logging.getLogger(__name__)


# Turns raw ticks into the discrete series every other command works on.
class IngestCog(Cog):
    def __init__(self, app):
        super().__init__(app)
        log.info("-> Ingest cog is initialized.")

    @command('ingest', "Resample ticks, compute log-returns and discretize them.",
             *INPUT_OPTIONS, *RUN_OPTIONS)
    def ingest(self, config: RunConfig, args) -> dict:
        """Writes series.csv (n,state) and map.json."""
        J, summary = ingest_ticks(config)
        with ArtifactWriter(config, 'ingest') as writer:
            writer.write_csv('series.csv', J.to_frame())
            writer.write_json('map.json', summary)
        return {'returns': len(J), 'delta': summary.map.delta}


def setup(app):
    app.add_cog(IngestCog(app))
