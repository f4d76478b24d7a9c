use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use driftlab_client::api::{
    ComponentId, CreateLearner, CreateSession, CsvSchema, LearnerId, SampleId, Selection, SessionConfig, SetEnsemble,
    StreamRequest,
};
use driftlab_client::Client;
use driftlab_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "driftlab", version, about = "Concept-drift analysis sessions over HTTP")]
struct Cli {
    /// Service root used by the client commands.
    #[arg(long, global = true, env = "DRIFTLAB_URL", default_value = "http://127.0.0.1:7878")]
    server: String,
    /// Revision to send as If-Match with mutations.
    #[arg(long, global = true)]
    if_match: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "DRIFTLAB_PORT", default_value_t = 7878)]
        port: u16,
        #[arg(long, env = "DRIFTLAB_HOST", default_value = "127.0.0.1")]
        host: String,
        /// Where sessions are persisted; in-memory only when omitted.
        #[arg(long, env = "DRIFTLAB_DATA_DIR")]
        data_dir: Option<PathBuf>,
        /// Built browser bundle to serve outside /v1.
        #[arg(long, env = "DRIFTLAB_STATIC_DIR")]
        static_dir: Option<PathBuf>,
    },
    /// List sessions.
    Sessions,
    /// Create a session from a CSV file.
    Create {
        csv: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
        /// JSON session configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Show one session.
    Show { session: String },
    /// Delete a session.
    Delete { session: String },
    /// Append CSV rows to a session's stream.
    Stream {
        session: String,
        csv: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
        #[arg(long)]
        advance_to: Option<i64>,
    },
    /// Print the drift series.
    Drift {
        session: String,
        /// Comma-separated feature names to include.
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
        #[arg(long)]
        clusters: bool,
    },
    /// Print the mixture components.
    Components { session: String },
    /// Merge components into one.
    Merge {
        session: String,
        #[arg(required = true, num_args = 2..)]
        ids: Vec<u32>,
    },
    /// Solve the projection (waits for the result) or print the latest one.
    Project {
        session: String,
        #[arg(long)]
        show: bool,
    },
    /// Print a density-difference grid between two selections.
    DensityDiff {
        session: String,
        #[arg(long, default_value = "window")]
        newer: String,
        #[arg(long, default_value = "previous-window")]
        older: String,
    },
    /// Train a base learner on a selection or on explicit ids.
    Learn {
        session: String,
        #[arg(long)]
        selection: Option<String>,
        #[arg(long, value_delimiter = ',')]
        ids: Vec<u64>,
    },
    /// List base learners.
    Learners { session: String },
    /// Set ensemble members, or print the ensemble when no members are given.
    Ensemble {
        session: String,
        #[arg(long, value_delimiter = ',')]
        members: Vec<u32>,
        #[arg(long, value_delimiter = ',')]
        weights: Vec<f64>,
    },
    /// Run a weighted-majority update on a labeled selection.
    Update {
        session: String,
        #[arg(long, default_value = "window")]
        selection: String,
    },
    /// Print per-class, confidence-binned prediction counts.
    Performance {
        session: String,
        #[arg(long, default_value = "window")]
        selection: String,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// Also score the ensemble from before the latest adaptation.
        #[arg(long)]
        compare: bool,
    },
    /// Store a named sample set, or list them when no ids are given.
    Mark {
        session: String,
        name: Option<String>,
        #[arg(long, value_delimiter = ',')]
        ids: Vec<u64>,
    },
    /// Write the session document to a file.
    Export { session: String, out: PathBuf },
    /// Load a session document.
    Import {
        file: PathBuf,
        #[arg(long)]
        id: Option<String>,
    },
}

#[derive(Args)]
struct SchemaArgs {
    #[arg(long, default_value = "tick")]
    timestamp: String,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    id_column: Option<String>,
    /// Comma-separated feature columns; every other column when omitted.
    #[arg(long, value_delimiter = ',')]
    features: Vec<String>,
}

impl SchemaArgs {
    fn schema(&self) -> CsvSchema {
        let mut s = CsvSchema::new(self.timestamp.clone());
        s.label = self.label.clone();
        s.id = self.id_column.clone();
        if !self.features.is_empty() {
            s.features = Some(self.features.clone());
        }
        s
    }
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn print<T: serde::Serialize + ?Sized>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn selection(text: &str) -> Result<Selection> {
    text.parse().map_err(|e| anyhow::anyhow!("{e}"))
}

#[tokio::main]
async fn main() -> Result<()> {
    let cli = Cli::parse();
    let client = Client::new(cli.server.clone()).with_revision(cli.if_match);
    match cli.command {
        Command::Serve {
            port,
            host,
            data_dir,
            static_dir,
        } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad listen address")?;
            driftlab_service::serve(addr, ServiceConfig { data_dir, static_dir }).await?;
        }
        Command::Sessions => print(&client.list_sessions().await?)?,
        Command::Create { csv, schema, config } => {
            let config: SessionConfig = match config {
                Some(p) => serde_json::from_str(&read(&p)?).context("parsing session config")?,
                None => SessionConfig::default(),
            };
            let req = CreateSession {
                csv: read(&csv)?,
                schema: schema.schema(),
                config,
            };
            print(&client.create_session(&req).await?)?;
        }
        Command::Show { session } => print(&client.session(&session).await?)?,
        Command::Delete { session } => client.delete_session(&session).await?,
        Command::Stream {
            session,
            csv,
            schema,
            advance_to,
        } => {
            let req = StreamRequest {
                rows: Vec::new(),
                csv: Some(read(&csv)?),
                schema: Some(schema.schema()),
                advance_to,
            };
            let res = client.stream(&session, &req).await?;
            let overall: Vec<Value> = res
                .drift_points
                .iter()
                .map(|p| serde_json::json!({ "tick": p.tick, "overall": p.overall }))
                .collect();
            print(&serde_json::json!({
                "revision": res.revision,
                "end_tick": res.end_tick,
                "rows": res.ids.len(),
                "firm": res.firm,
                "provisional": res.provisional,
                "new_components": res.new_components.iter().flat_map(|e| e.component_ids.clone()).collect::<Vec<_>>(),
                "drift": overall,
            }))?;
        }
        Command::Drift {
            session,
            features,
            clusters,
        } => {
            let names: Vec<&str> = features.iter().map(String::as_str).collect();
            print(&client.drift(&session, &names, clusters).await?)?;
        }
        Command::Components { session } => print(&client.components(&session).await?)?,
        Command::Merge { session, ids } => {
            let ids: Vec<ComponentId> = ids.into_iter().map(ComponentId).collect();
            print(&client.merge(&session, &ids).await?)?;
        }
        Command::Project { session, show } => {
            if !show {
                client.refresh_projection(&session, true).await?;
            }
            print(&client.projection(&session).await?)?;
        }
        Command::DensityDiff { session, newer, older } => {
            print(&client.density_diff(&session, &selection(&newer)?, &selection(&older)?).await?)?;
        }
        Command::Learn { session, selection, ids } => {
            if selection.is_none() && ids.is_empty() {
                bail!("give --selection or --ids");
            }
            let req = CreateLearner {
                sample_ids: ids.into_iter().map(SampleId).collect(),
                selection,
                hyper: None,
            };
            print(&client.create_learner(&session, &req).await?)?;
        }
        Command::Learners { session } => print(&client.learners(&session).await?)?,
        Command::Ensemble {
            session,
            members,
            weights,
        } => {
            if members.is_empty() {
                print(&client.ensemble(&session).await?)?;
            } else {
                let req = SetEnsemble {
                    members: members.into_iter().map(LearnerId).collect(),
                    weights: (!weights.is_empty()).then_some(weights),
                };
                print(&client.set_ensemble(&session, &req).await?)?;
            }
        }
        Command::Update { session, selection: sel } => {
            print(&client.update_ensemble(&session, &selection(&sel)?).await?)?;
        }
        Command::Performance {
            session,
            selection: sel,
            bins,
            compare,
        } => print(&client.performance(&session, &selection(&sel)?, bins, compare).await?)?,
        Command::Mark { session, name, ids } => match name {
            Some(name) if !ids.is_empty() => {
                let ids: Vec<SampleId> = ids.into_iter().map(SampleId).collect();
                print(&client.add_sample_set(&session, &name, &ids).await?)?;
            }
            Some(name) => print(&client.sample_set(&session, &name).await?)?,
            None => print(&client.sample_sets(&session).await?)?,
        },
        Command::Export { session, out } => {
            let doc = client.export(&session).await?;
            std::fs::write(&out, doc).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Import { file, id } => print(&client.import(read(&file)?, id.as_deref()).await?)?,
    }
    Ok(())
}
