//! Codec round-trip through an external encoder/decoder process.

use std::fs;
use std::path::Path;
use std::process::Command;

use crate::clip::ClipTensor;
use crate::config::CodecCommand;
use crate::error::{DiqpError, Result};
use crate::pipeline::manifest::write_frame_dir;

/// Environment variable that replaces the configured encoder program.
pub const ENCODER_ENV: &str = "DIQP_ENCODER";

#[derive(Clone, Debug)]
pub struct ExternalCodec {
    pub command: CodecCommand,
}

fn substitute(args: &[String], input: &str, output: &str, qp: u32, fps: f64) -> Vec<String> {
    args.iter()
        .map(|a| {
            a.replace("{input}", input)
                .replace("{output}", output)
                .replace("{qp}", &qp.to_string())
                .replace("{fps}", &fps.to_string())
        })
        .collect()
}

impl ExternalCodec {
    /// Uses `$DIQP_ENCODER` as the program when it is set.
    pub fn from_config(command: &CodecCommand) -> Self {
        let mut command = command.clone();
        if let Ok(program) = std::env::var(ENCODER_ENV) {
            if !program.is_empty() {
                command.program = program;
            }
        }
        Self { command }
    }

    fn run(&self, args: Vec<String>, stage: &str) -> Result<()> {
        let out = Command::new(&self.command.program).args(&args).output().map_err(|e| {
            DiqpError::Tool(format!("cannot run `{}` for {stage}: {e}", self.command.program))
        })?;
        if !out.status.success() {
            return Err(DiqpError::Tool(format!(
                "`{}` {stage} exited with {}: {}",
                self.command.program,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(())
    }

    /// Encode at `qp` and decode back to frames of the same size and count.
    pub fn round_trip(&self, clip: &ClipTensor, qp: u32, fps: f64) -> Result<ClipTensor> {
        let work = tempfile::tempdir().map_err(|e| DiqpError::io(std::env::temp_dir(), e))?;
        let dir = work.path();
        let src = dir.join("src");
        let dst = dir.join("dst");
        write_frame_dir(&src, clip)?;
        fs::create_dir_all(&dst).map_err(|e| DiqpError::io(&dst, e))?;
        let encoded = dir.join(format!("encoded.{}", self.command.container));
        let pattern = |d: &Path| d.join("frame_%05d.png").to_string_lossy().into_owned();
        let enc = encoded.to_string_lossy().into_owned();
        self.run(substitute(&self.command.encode, &pattern(&src), &enc, qp, fps), "encode")?;
        self.run(substitute(&self.command.decode, &enc, &pattern(&dst), qp, fps), "decode")?;
        // Decoders commonly number output frames from 1.
        let produced = fs::read_dir(&dst).map_err(|e| DiqpError::io(&dst, e))?.count();
        if produced != clip.frames() {
            return Err(DiqpError::Tool(format!(
                "decoder produced {produced} frames, expected {}",
                clip.frames()
            )));
        }
        let mut names: Vec<_> = fs::read_dir(&dst)
            .map_err(|e| DiqpError::io(&dst, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        names.sort();
        let frames = names
            .iter()
            .map(|p| crate::imageio::read_rgb(p))
            .collect::<Result<Vec<_>>>()?;
        let out = ClipTensor::from_frames(&frames)?;
        if out.tensor().shape() != clip.tensor().shape() {
            return Err(DiqpError::Tool(format!(
                "decoded clip has shape {:?}, expected {:?}",
                out.tensor().shape(),
                clip.tensor().shape()
            )));
        }
        Ok(out)
    }
}
