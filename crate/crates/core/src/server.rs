//! Single-client TCP control server.

use crate::annotate::DEFAULT_MIN_PIXELS;
use crate::camera::{CameraPose, DEFAULT_HFOV};
use crate::dataset::MetaRecord;
use crate::error::{Error, Result};
use crate::generate::render_frame;
use crate::geometry::{Rect, Vec3};
use crate::protocol::{
    decode_command, read_frame, salvage_id, write_message, Command, Frame, FrameMessage, Response,
    ResponseMessage, MAX_MESSAGE_BYTES,
};
use crate::render::{set_quality, RenderSettings};
use crate::scenario::Scenario;
use crate::world::{Biome, ObjectClass, WorldState};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

/// Defaults for manually driven sessions.
#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub seed: u64,
    pub render: RenderSettings,
    pub biome: Biome,
    pub area: Rect<f64>,
    pub horizontal_fov: f64,
    pub min_pixels: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            render: RenderSettings::default(),
            biome: Biome::Pasture,
            area: Rect::new(-1000.0, -1000.0, 1000.0, 1000.0),
            horizontal_fov: DEFAULT_HFOV,
            min_pixels: DEFAULT_MIN_PIXELS,
        }
    }
}

/// State of one client connection.
pub struct Session {
    config: ServerConfig,
    world: WorldState,
    pose: CameraPose<f64>,
    settings: RenderSettings,
    next_frame_id: u64,
}

impl Session {
    pub fn new(config: ServerConfig) -> Self {
        let world = WorldState::new(config.biome, config.area, config.seed);
        Self {
            world,
            pose: CameraPose::new(Vec3::new(0.0, 0.0, 50.0), 0.0, 90.0, 0.0),
            settings: config.render,
            next_frame_id: 0,
            config,
        }
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    /// Serves requests until the stream ends or a `stop` command arrives.
    pub fn run<R: Read, W: Write>(&mut self, input: R, output: W) -> Result<()> {
        let mut input = BufReader::new(input);
        let mut output = BufWriter::new(output);
        loop {
            let keep_going = match read_frame(&mut input) {
                Ok(Frame::Eof) => false,
                Ok(Frame::Oversized(n)) => {
                    write_message(
                        &mut output,
                        &ResponseMessage::error(
                            None,
                            format!("message of {n} bytes exceeds {MAX_MESSAGE_BYTES}"),
                        ),
                    )?;
                    true
                }
                Ok(Frame::Body(body)) => self.dispatch(&body, &mut output)?,
                // truncated trailing frame: nothing more to answer
                Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => false,
                Err(e) => return Err(e.into()),
            };
            output.flush()?;
            if !keep_going {
                return Ok(());
            }
        }
    }

    /// Handles one request body; returns `false` after `stop`.
    pub fn dispatch<W: Write>(&mut self, body: &[u8], out: &mut W) -> Result<bool> {
        let msg = match decode_command(body) {
            Ok(m) => m,
            Err(e) => {
                write_message(
                    out,
                    &ResponseMessage::error(salvage_id(body), e.to_string()),
                )?;
                return Ok(true);
            }
        };
        let id = Some(msg.id);
        let reply = |out: &mut W, body: Response| -> Result<()> {
            write_message(out, &ResponseMessage::new(id, body))?;
            Ok(())
        };
        match msg.command {
            Command::Ping => reply(out, Response::Pong)?,
            Command::Stop => {
                reply(out, Response::Ok)?;
                return Ok(false);
            }
            Command::SetCameraPose {
                position,
                yaw,
                pitch,
                roll,
            } => {
                let pose = CameraPose::new(
                    Vec3::new(position[0], position[1], position[2]),
                    yaw,
                    pitch,
                    roll,
                );
                match pose.validate() {
                    Ok(())
                        if position
                            .iter()
                            .chain([yaw, roll].iter())
                            .all(|v| v.is_finite()) =>
                    {
                        self.pose = pose;
                        reply(out, Response::Ok)?
                    }
                    Ok(()) => write_message(out, &ResponseMessage::error(id, "non-finite pose"))?,
                    Err(e) => write_message(out, &ResponseMessage::error(id, e.to_string()))?,
                }
            }
            Command::SetClock { seconds } if seconds.is_finite() => {
                self.world.set_clock(seconds);
                reply(out, Response::Ok)?
            }
            Command::SetClock { .. } => {
                write_message(out, &ResponseMessage::error(id, "clock must be finite"))?
            }
            Command::SetWeather { weather } => {
                self.world.weather = weather;
                reply(out, Response::Ok)?
            }
            Command::SetQuality { quality } => {
                self.settings = set_quality(self.settings, quality);
                reply(out, Response::Ok)?
            }
            Command::Goto { x, y } if x.is_finite() && y.is_finite() => {
                self.pose.position.x = x;
                self.pose.position.y = y;
                reply(out, Response::Ok)?
            }
            Command::Goto { .. } => {
                write_message(out, &ResponseMessage::error(id, "target must be finite"))?
            }
            Command::Spawn {
                class,
                forward,
                lateral,
                heading,
            } => match self.spawn(&class, forward, lateral, heading) {
                Ok(object_id) => reply(out, Response::Spawned { object_id })?,
                Err(e) => write_message(out, &ResponseMessage::error(id, e.to_string()))?,
            },
            Command::RequestFrame => match self.capture() {
                Ok((header, png)) => {
                    reply(out, Response::Frame(header))?;
                    out.write_all(&png)?;
                }
                Err(e) => write_message(out, &ResponseMessage::error(id, e.to_string()))?,
            },
            Command::StartScenario { config } => match Scenario::new(*config) {
                Err(e) => write_message(out, &ResponseMessage::error(id, e.to_string()))?,
                Ok(scenario) => {
                    let frames = self.stream_scenario(scenario, id, out)?;
                    reply(out, Response::ScenarioComplete { frames })?
                }
            },
        }
        Ok(true)
    }

    fn spawn(&mut self, class: &str, forward: f64, lateral: f64, heading: f64) -> Result<u32> {
        let class: ObjectClass = class.parse()?;
        if ![forward, lateral, heading].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("spawn offsets must be finite".into()));
        }
        let (s, c) = self.pose.yaw.to_radians().sin_cos();
        let p = Vec3::new(
            self.pose.position.x + s * forward + c * lateral,
            self.pose.position.y + c * forward - s * lateral,
            0.0,
        );
        self.world.spawn_object(class, p, heading, 0.0)
    }

    fn capture(&mut self) -> Result<(FrameMessage, Vec<u8>)> {
        let intr = self.settings.intrinsics(self.config.horizontal_fov)?;
        let frame_id = self.next_frame_id;
        let frame = render_frame(
            &self.world,
            &self.pose,
            &intr,
            &self.settings,
            frame_id,
            self.config.min_pixels,
        )?;
        self.next_frame_id += 1;
        let png = frame.image.encode_png()?;
        let header = FrameMessage {
            frame_id,
            meta: MetaRecord::new(frame_id, &self.pose, &self.world, self.settings.quality),
            annotations: frame.annotations,
            payload_bytes: png.len() as u64,
        };
        Ok((header, png))
    }

    fn stream_scenario<W: Write>(
        &mut self,
        mut scenario: Scenario,
        id: Option<i64>,
        out: &mut W,
    ) -> Result<u64> {
        let settings = scenario.config.render;
        let intr = settings.intrinsics(scenario.horizontal_fov())?;
        let mut frames = 0;
        while let Some(capture) = scenario.next_capture() {
            let frame = render_frame(
                &scenario.world,
                &capture.pose,
                &intr,
                &settings,
                capture.frame_id,
                self.config.min_pixels,
            )?;
            let png = frame.image.encode_png()?;
            let header = FrameMessage {
                frame_id: capture.frame_id,
                meta: capture.meta,
                annotations: frame.annotations,
                payload_bytes: png.len() as u64,
            };
            write_message(out, &ResponseMessage::new(id, Response::Frame(header)))?;
            out.write_all(&png)?;
            out.flush()?;
            frames += 1;
        }
        Ok(frames)
    }
}

/// Listening server; clients are served one at a time.
pub struct Server {
    listener: TcpListener,
    config: ServerConfig,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, config: ServerConfig) -> Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            config,
        })
    }

    pub fn local_addr(&self) -> Result<std::net::SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts and serves exactly one client.
    pub fn serve_one(&self) -> Result<()> {
        let (stream, _) = self.listener.accept()?;
        self.handle(stream)
    }

    fn handle(&self, stream: TcpStream) -> Result<()> {
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Session::new(self.config.clone()).run(reader, stream)
    }

    /// Serves clients sequentially forever.
    pub fn serve(&self) -> Result<()> {
        for stream in self.listener.incoming() {
            match stream {
                Ok(s) => {
                    if let Err(e) = self.handle(s) {
                        eprintln!("session ended with error: {e}");
                    }
                }
                Err(e) => eprintln!("accept failed: {e}"),
            }
        }
        Ok(())
    }
}

pub fn serve(port: u16, config: ServerConfig) -> Result<()> {
    Server::bind(("0.0.0.0", port), config)?.serve()
}
