/**
 * Datasets and augmentation.
 *
 * A sample is one image with its binary label mask and an optional
 * field-of-view mask, all stored flat in row-major HWC order.  File
 * datasets are triples under a common root: `images/<name>.ppm` (P6),
 * `labels/<name>.pgm` (P5, values > 127 are positive), and optionally
 * `fov/<name>.pgm`.  Synthetic samples are smooth random fields whose
 * sign defines the mask, so the mapping is learnable from the image.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";

import { Rng, mulberry32 } from "./rng.js";

export interface Sample {
  height: number;
  width: number;
  channels: number;
  /** Raw intensities in [0, 1], length height*width*channels. */
  image: Float32Array;
  /** Binary mask, length height*width. */
  label: Uint8Array;
  fov: Uint8Array | null;
}

export function syntheticSamples(
  count: number,
  size: number,
  channels: number,
  seed: number,
): Sample[] {
  const rng = mulberry32(seed);
  const samples: Sample[] = [];
  for (let index = 0; index < count; index++) {
    const waves = Array.from({ length: 4 }, () => ({
      fx: (rng() * 4 + 1) / size,
      fy: (rng() * 4 + 1) / size,
      phase: rng() * 2 * Math.PI,
      amp: 0.5 + rng(),
    }));
    const field = new Float64Array(size * size);
    let peak = 1e-9;
    for (let y = 0; y < size; y++) {
      for (let x = 0; x < size; x++) {
        let value = 0;
        for (const w of waves) {
          value += w.amp * Math.sin(2 * Math.PI * (w.fx * x + w.fy * y) + w.phase);
        }
        field[y * size + x] = value;
        peak = Math.max(peak, Math.abs(value));
      }
    }
    const image = new Float32Array(size * size * channels);
    const label = new Uint8Array(size * size);
    for (let i = 0; i < field.length; i++) {
      const normalized = field[i] / peak; // [-1, 1]
      label[i] = normalized > 0 ? 1 : 0;
      for (let c = 0; c < channels; c++) {
        const tint = 1 - 0.15 * (c / Math.max(1, channels - 1));
        image[i * channels + c] = (normalized * tint + 1) / 2;
      }
    }
    samples.push({
      height: size,
      width: size,
      channels,
      image,
      label,
      fov: null,
    });
  }
  return samples;
}

/* ---------------------------------------------------------- file IO -- */

function parseNetpbmHeader(buffer: Buffer, magic: string) {
  if (buffer.subarray(0, 2).toString("ascii") !== magic) {
    throw new Error(`expected ${magic} file`);
  }
  const fields: number[] = [];
  let pos = 2;
  while (fields.length < 3) {
    const ch = String.fromCharCode(buffer[pos]);
    if (ch === "#") {
      while (buffer[pos] !== 0x0a) pos++;
      pos++;
    } else if (/\s/.test(ch)) {
      pos++;
    } else {
      let token = "";
      while (!/\s/.test(String.fromCharCode(buffer[pos]))) {
        token += String.fromCharCode(buffer[pos]);
        pos++;
      }
      fields.push(Number(token));
    }
  }
  pos++; // single whitespace after maxval
  const [width, height, maxval] = fields;
  if (maxval > 255) throw new Error("only 8-bit netpbm files are supported");
  return { width, height, offset: pos };
}

export function loadPgm(file: string): { width: number; height: number; data: Uint8Array } {
  const buffer = fs.readFileSync(file);
  const { width, height, offset } = parseNetpbmHeader(buffer, "P5");
  return { width, height, data: new Uint8Array(buffer.subarray(offset, offset + width * height)) };
}

export function loadPpm(file: string): { width: number; height: number; data: Uint8Array } {
  const buffer = fs.readFileSync(file);
  const { width, height, offset } = parseNetpbmHeader(buffer, "P6");
  return {
    width,
    height,
    data: new Uint8Array(buffer.subarray(offset, offset + width * height * 3)),
  };
}

export function writePgm(file: string, width: number, height: number, data: Uint8Array): void {
  const header = Buffer.from(`P5\n${width} ${height}\n255\n`, "ascii");
  fs.writeFileSync(file, Buffer.concat([header, Buffer.from(data)]));
}

export function writePpm(file: string, width: number, height: number, data: Uint8Array): void {
  const header = Buffer.from(`P6\n${width} ${height}\n255\n`, "ascii");
  fs.writeFileSync(file, Buffer.concat([header, Buffer.from(data)]));
}

export function loadTriple(root: string, name: string): Sample {
  const image = loadPpm(path.join(root, "images", `${name}.ppm`));
  const label = loadPgm(path.join(root, "labels", `${name}.pgm`));
  if (label.width !== image.width || label.height !== image.height) {
    throw new Error(`${name}: label size does not match image`);
  }
  const fovPath = path.join(root, "fov", `${name}.pgm`);
  let fov: Uint8Array | null = null;
  if (fs.existsSync(fovPath)) {
    const mask = loadPgm(fovPath);
    if (mask.width !== image.width || mask.height !== image.height) {
      throw new Error(`${name}: fov size does not match image`);
    }
    fov = Uint8Array.from(mask.data, (v) => (v > 127 ? 1 : 0));
  }
  const pixels = image.width * image.height;
  const imageF = new Float32Array(pixels * 3);
  for (let i = 0; i < pixels * 3; i++) imageF[i] = image.data[i] / 255;
  return {
    height: image.height,
    width: image.width,
    channels: 3,
    image: imageF,
    label: Uint8Array.from(label.data, (v) => (v > 127 ? 1 : 0)),
    fov,
  };
}

export function loadFileDataset(root: string, names: string[]): Sample[] {
  if (!fs.existsSync(root)) {
    throw new Error(`dataset root ${root} does not exist`);
  }
  return names.map((name) => loadTriple(root, name));
}

/* ----------------------------------------------------- augmentation -- */

function flipH<T extends Float32Array | Uint8Array>(
  data: T, height: number, width: number, channels: number,
): T {
  const out = new (data.constructor as new (n: number) => T)(data.length);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      for (let c = 0; c < channels; c++) {
        out[(y * width + x) * channels + c] =
          data[(y * width + (width - 1 - x)) * channels + c];
      }
    }
  }
  return out;
}

function flipV<T extends Float32Array | Uint8Array>(
  data: T, height: number, width: number, channels: number,
): T {
  const out = new (data.constructor as new (n: number) => T)(data.length);
  for (let y = 0; y < height; y++) {
    out.set(
      data.subarray((height - 1 - y) * width * channels, (height - y) * width * channels) as never,
      y * width * channels,
    );
  }
  return out;
}

/** Nearest-neighbour rotation about the image centre; exposed areas are 0. */
function rotateNearest<T extends Float32Array | Uint8Array>(
  data: T, height: number, width: number, channels: number, radians: number,
): T {
  const out = new (data.constructor as new (n: number) => T)(data.length);
  const cos = Math.cos(radians);
  const sin = Math.sin(radians);
  const cy = (height - 1) / 2;
  const cx = (width - 1) / 2;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const dy = y - cy;
      const dx = x - cx;
      const srcX = Math.round(cos * dx + sin * dy + cx);
      const srcY = Math.round(-sin * dx + cos * dy + cy);
      if (srcX < 0 || srcX >= width || srcY < 0 || srcY >= height) continue;
      for (let c = 0; c < channels; c++) {
        out[(y * width + x) * channels + c] =
          data[(srcY * width + srcX) * channels + c];
      }
    }
  }
  return out;
}

/** Horizontal/vertical flips at p=0.5 each plus a uniform [0, 360) rotation. */
export function augmentSample(sample: Sample, rng: Rng): Sample {
  let { image, label, fov } = sample;
  const { height, width, channels } = sample;
  if (rng() < 0.5) {
    image = flipH(image, height, width, channels);
    label = flipH(label, height, width, 1);
    if (fov) fov = flipH(fov, height, width, 1);
  }
  if (rng() < 0.5) {
    image = flipV(image, height, width, channels);
    label = flipV(label, height, width, 1);
    if (fov) fov = flipV(fov, height, width, 1);
  }
  const radians = rng() * 2 * Math.PI;
  image = rotateNearest(image, height, width, channels, radians);
  label = rotateNearest(label, height, width, 1, radians);
  if (fov) fov = rotateNearest(fov, height, width, 1, radians);
  return { height, width, channels, image, label, fov };
}

/** Random crop for large-image training; full images stay untouched. */
export function cropSample(sample: Sample, cropH: number, cropW: number, rng: Rng): Sample {
  if (cropH >= sample.height && cropW >= sample.width) return sample;
  const h = Math.min(cropH, sample.height);
  const w = Math.min(cropW, sample.width);
  const top = Math.floor(rng() * (sample.height - h + 1));
  const left = Math.floor(rng() * (sample.width - w + 1));
  const image = new Float32Array(h * w * sample.channels);
  const label = new Uint8Array(h * w);
  const fov = sample.fov ? new Uint8Array(h * w) : null;
  for (let y = 0; y < h; y++) {
    const srcRow = (top + y) * sample.width + left;
    image.set(
      sample.image.subarray(srcRow * sample.channels, (srcRow + w) * sample.channels),
      y * w * sample.channels,
    );
    label.set(sample.label.subarray(srcRow, srcRow + w), y * w);
    if (fov && sample.fov) fov.set(sample.fov.subarray(srcRow, srcRow + w), y * w);
  }
  return { height: h, width: w, channels: sample.channels, image, label, fov };
}

/* --------------------------------------------------------- tensors -- */

/** Image tensor [1, H, W, C], normalized from [0, 1] to [-0.5, 0.5]. */
export function imageTensor(sample: Sample): tf.Tensor4D {
  return tf.tidy(() =>
    tf
      .tensor4d(sample.image, [1, sample.height, sample.width, sample.channels])
      .sub(0.5),
  ) as tf.Tensor4D;
}

export function labelTensor(sample: Sample): tf.Tensor4D {
  return tf.tensor4d(
    Float32Array.from(sample.label),
    [1, sample.height, sample.width, 1],
  );
}
