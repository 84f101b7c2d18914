/**
 * Minimal PNG header reader. The bundled grid backend only needs pixel
 * dimensions, so there is no image decoding here: just the signature check
 * and the IHDR width/height fields.
 */

import { open } from "node:fs/promises";

const PNG_SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

export interface ImageDims {
  width: number;
  height: number;
}

export function parsePngDims(header: Buffer): ImageDims {
  if (header.length < 24 || !header.subarray(0, 8).equals(PNG_SIGNATURE)) {
    throw new Error("not a PNG file");
  }
  // Bytes 12..16 must name the IHDR chunk; width/height follow big-endian.
  if (header.toString("latin1", 12, 16) !== "IHDR") {
    throw new Error("PNG missing IHDR chunk");
  }
  const width = header.readUInt32BE(16);
  const height = header.readUInt32BE(20);
  if (width < 1 || height < 1) {
    throw new Error(`invalid PNG dimensions ${width}x${height}`);
  }
  return { width, height };
}

export async function readPngDims(path: string): Promise<ImageDims> {
  const file = await open(path, "r");
  try {
    const header = Buffer.alloc(24);
    const { bytesRead } = await file.read(header, 0, 24, 0);
    return parsePngDims(header.subarray(0, bytesRead));
  } finally {
    await file.close();
  }
}
